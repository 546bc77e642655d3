import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["tests/e2e.setup.ts"],
    fileParallelism: false,
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
