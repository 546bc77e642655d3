/** Spawns a human-mode experiment server for the end-to-end suite. */

import { spawn, ChildProcess, execFileSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

const PORT = 8651;
let proc: ChildProcess | undefined;
let workdir: string | undefined;

const BOOTSTRAP = `
import sys
from airseg.experiment import Experiment, ExperimentConfig
from airseg.model import TrainConfig
from airseg.phantom import PhantomSpec
from airseg.volume import VolumeDims

cfg = ExperimentConfig(
    strategy="entropy", rounds=2, batch_per_round=2, initial_labeled_count=2,
    pool_size=4, validation_count=2, test_count=1, oracle="human",
    train=TrainConfig(epochs=1),
    phantom=PhantomSpec(dims=VolumeDims(20, 20, 20), branch_count=(1, 3)),
    seed=21, min_sample_epochs=4,
)
Experiment(cfg, sys.argv[1])
`;

export default async function setup() {
  workdir = mkdtempSync(join(tmpdir(), "airseg-ui-"));
  const expDir = join(workdir, "exp");
  execFileSync("python3", ["-c", BOOTSTRAP, expDir], { stdio: "inherit" });

  proc = spawn(
    "python3",
    ["-m", "airseg.cli", "serve", "--experiment", expDir, "--port", String(PORT)],
    { stdio: "ignore" }
  );

  for (let i = 0; i < 100; i++) {
    try {
      const res = await fetch(`http://127.0.0.1:${PORT}/api/state`);
      if (res.ok) {
        process.env.AIRSEG_TEST_BASE = `http://127.0.0.1:${PORT}`;
        return teardown;
      }
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("experiment server did not come up");
}

function teardown() {
  proc?.kill("SIGTERM");
  if (workdir) rmSync(workdir, { recursive: true, force: true });
}
