// End-to-end check against a real serve instance: spawns the simulator CLI,
// consumes the live snapshot stream through the same client code the
// browser uses, and drives admin actions through the store reducer the
// page renders from.

import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient, ApiError } from "../src/api.js";
import { connectStream } from "../src/sse.js";
import { initialState, reduce, ViewState } from "../src/store.js";
import { Snapshot } from "../src/types.js";

const REPO_ROOT = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "..");
const TOKEN = "integration-token";
const TICK_SIM_SECONDS = 5;
const DILATION = 0.002; // one sampling tick every 10ms wall

let child: ChildProcess | null = null;
let base = "";
let stopStream: (() => void) | null = null;

let state: ViewState = initialState();
const snapshots: Snapshot[] = [];

function dispatch(event: Parameters<typeof reduce>[1]): void {
    state = reduce(state, event);
}

function sleep(ms: number): Promise<void> {
    return new Promise((r) => setTimeout(r, ms));
}

async function waitFor(what: string, pred: () => boolean, timeoutMs = 20000): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        if (pred()) return;
        await sleep(10);
    }
    assert.fail(`timed out waiting for ${what}`);
}

async function startServer(): Promise<void> {
    const dir = mkdtempSync(join(tmpdir(), "dashboard-it-"));
    const configPath = join(dir, "sim.toml");
    writeFileSync(
        configPath,
        [
            "n_devices = 3",
            "seed = 0",
            "horizon = 50000.0",
            "capability_mix = [0.0, 0.0, 0.0]", // guard bots: stay live until shut down
            "owner_responsiveness = 0.0",
            "white_scan_rate = 0.2",
            "owner_window = 30.0",
            `metrics_interval = ${TICK_SIM_SECONDS}.0`,
        ].join("\n"),
    );

    for (let attempt = 0; attempt < 3; attempt++) {
        const port = 17890 + Math.floor(Math.random() * 1000);
        const proc = spawn(
            "python3",
            [
                "-m", "antibiotic.cli", "serve",
                "--config", configPath,
                "--bind", `127.0.0.1:${port}`,
                "--admin-token", TOKEN,
                "--time-dilation", String(DILATION),
                "--out", dir,
            ],
            {
                cwd: REPO_ROOT,
                env: { ...process.env, PYTHONPATH: join(REPO_ROOT, "src") },
                stdio: ["ignore", "pipe", "pipe"],
            },
        );
        let stderr = "";
        proc.stderr?.on("data", (chunk) => (stderr += String(chunk)));

        base = `http://127.0.0.1:${port}`;
        const deadline = Date.now() + 15000;
        while (Date.now() < deadline && proc.exitCode === null) {
            try {
                const resp = await fetch(`${base}/api/stats`);
                if (resp.ok) {
                    child = proc;
                    return;
                }
            } catch {
                // not listening yet
            }
            await sleep(50);
        }
        proc.kill("SIGKILL");
        if (proc.exitCode !== 4) {
            assert.fail(`server failed to start: exit=${proc.exitCode} stderr=${stderr}`);
        }
        // exit 4: port collision, try another one
    }
    assert.fail("no free port found for the integration server");
}

before(async () => {
    await startServer();
    stopStream = connectStream(
        `${base}/api/events/stream`,
        {
            onOpen: () => dispatch({ kind: "stream-open" }),
            onData: (data) => {
                const snapshot = JSON.parse(data) as Snapshot;
                snapshots.push(snapshot);
                dispatch({ kind: "snapshot", snapshot, wallNow: Date.now() });
            },
            onError: () => dispatch({ kind: "stream-lost" }),
        },
        { retryBaseMs: 200 },
    );
});

after(() => {
    stopStream?.();
    if (child && child.exitCode === null) {
        child.kill("SIGTERM");
        setTimeout(() => child?.kill("SIGKILL"), 3000).unref();
    }
});

test("view reflects streamed snapshots within one sampling tick", async () => {
    await waitFor("two streamed snapshots", () => snapshots.length >= 2);
    // The reducer applied the newest snapshot verbatim: no lag, no recompute.
    assert.deepEqual(state.latest, snapshots[snapshots.length - 1]);
    assert.equal(state.connection, "live");
    const last = snapshots[snapshots.length - 1];
    const prev = snapshots[snapshots.length - 2];
    assert.ok(last.sim_time > prev.sim_time);
    assert.ok(last.sim_time - prev.sim_time <= TICK_SIM_SECONDS + 1e-9);
    const total =
        last.vulnerable + last.infected_black + last.infected_white +
        last.secured_temp + last.secured_perm;
    assert.equal(total, 3);
});

test("admin mutations without a token are rejected and surfaced", async () => {
    const anonymous = new ApiClient(base, null);
    try {
        await anonymous.shutdown();
        assert.fail("shutdown without token must be rejected");
    } catch (err) {
        assert.ok(err instanceof ApiError);
        assert.equal(err.status, 401);
        dispatch({ kind: "action-failed", target: "shutdown", status: err.status, message: err.message });
    }
    assert.equal(state.role, "user");
    assert.ok(state.errors["shutdown"], "401 must be visible in the view state");
    assert.equal(state.shutdownLatched, false);

    const wrong = new ApiClient(base, "not-the-token");
    await assert.rejects(() => wrong.release(0), (e: unknown) => e instanceof ApiError && e.status === 401);
});

test("shutdown via the admin client zeroes live bots in the next snapshots", async () => {
    await waitFor("a live bot", () => (state.latest?.live_bots ?? 0) >= 1, 30000);

    const admin = new ApiClient(base, TOKEN);
    dispatch({ kind: "token", present: true });
    await admin.shutdown();
    dispatch({ kind: "shutdown-confirmed" });
    assert.equal(state.shutdownLatched, true);

    const atShutdown = state.latest!.sim_time;
    // Terminations take one network-latency round; the snapshot after the
    // next sampling tick must show zero.
    const settled = atShutdown + 2 * TICK_SIM_SECONDS;
    await waitFor(
        "post-shutdown snapshot",
        () => snapshots.some((s) => s.sim_time >= settled),
        30000,
    );
    const after_ = snapshots.filter((s) => s.sim_time >= settled);
    assert.ok(after_.length >= 1);
    for (const snap of after_) {
        assert.equal(snap.live_bots, 0);
    }
    assert.equal(state.latest!.live_bots, 0);
});
