/** Test environment: a real guidance service plus a real trial report. */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import fs from "node:fs";
import net from "node:net";
import path from "node:path";

const TMP = path.join(process.cwd(), ".test-tmp");

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.once("error", reject);
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as net.AddressInfo).port;
      server.close(() => resolve(port));
    });
  });
}

async function waitForService(port: number, proc: ChildProcess): Promise<void> {
  const deadline = Date.now() + 60_000;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited early with code ${proc.exitCode}`);
    }
    try {
      const response = await fetch(`http://127.0.0.1:${port}/sessions/none/history`);
      if (response.status === 404) return; // routing is up
    } catch (error) {
      lastError = error;
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`guidance service never came up: ${lastError}`);
}

export default async function setup(): Promise<() => Promise<void>> {
  fs.rmSync(TMP, { recursive: true, force: true });
  fs.mkdirSync(TMP, { recursive: true });

  const port = await freePort();
  const proc = spawn(
    "python3",
    ["-m", "doseguide.cli", "serve", "--port", String(port)],
    { stdio: "ignore" },
  );
  await waitForService(port, proc);
  fs.writeFileSync(path.join(TMP, "service.json"), JSON.stringify({ port }));

  // A genuine ten-patient report for the viewer tests.
  execFileSync(
    "python3",
    [
      "-m", "doseguide.cli", "trial",
      "--days", "2", "--patients", "10", "--seed", "3",
      "--out", path.join(TMP, "report"),
    ],
    { stdio: "ignore", timeout: 150_000 },
  );

  return async () => {
    proc.kill("SIGTERM");
    await new Promise((r) => setTimeout(r, 300));
    if (proc.exitCode === null) proc.kill("SIGKILL");
  };
}
