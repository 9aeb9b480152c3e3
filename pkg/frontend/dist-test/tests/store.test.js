import assert from "node:assert/strict";
import { test } from "node:test";
import { HISTORY_LIMIT, initialState, reduce } from "../src/store.js";
function snap(simTime, over = {}) {
    return {
        sim_time: simTime,
        vulnerable: 100,
        infected_black: 0,
        infected_white: 0,
        secured_temp: 0,
        secured_perm: 0,
        live_bots: 0,
        ...over,
    };
}
test("snapshot updates latest and appends history", () => {
    let state = initialState();
    state = reduce(state, { kind: "snapshot", snapshot: snap(0), wallNow: 1000 });
    state = reduce(state, { kind: "snapshot", snapshot: snap(1, { live_bots: 3 }), wallNow: 2000 });
    assert.equal(state.latest?.live_bots, 3);
    assert.equal(state.history.length, 2);
    assert.equal(state.connection, "live");
});
test("rendered counts come from the snapshot verbatim", () => {
    let state = initialState();
    const s = snap(5, { vulnerable: 97, infected_black: 2, secured_perm: 1 });
    state = reduce(state, { kind: "snapshot", snapshot: s, wallNow: 0 });
    assert.deepEqual(state.latest, s);
});
test("history ring is bounded", () => {
    let state = initialState();
    for (let i = 0; i < HISTORY_LIMIT + 50; i++) {
        state = reduce(state, { kind: "snapshot", snapshot: snap(i), wallNow: i * 10 });
    }
    assert.equal(state.history.length, HISTORY_LIMIT);
    assert.equal(state.history[0].sim_time, 50);
});
test("stale badge after two missed ticks, live again on data", () => {
    let state = initialState();
    state = reduce(state, { kind: "snapshot", snapshot: snap(0), wallNow: 0 });
    state = reduce(state, { kind: "snapshot", snapshot: snap(1), wallNow: 1000 });
    assert.equal(state.tickMillis, 1000);
    state = reduce(state, { kind: "clock", wallNow: 2500 });
    assert.equal(state.connection, "live");
    state = reduce(state, { kind: "clock", wallNow: 3001 });
    assert.equal(state.connection, "stale");
    state = reduce(state, { kind: "snapshot", snapshot: snap(2), wallNow: 3100 });
    assert.equal(state.connection, "live");
});
test("stream loss is visible, never silent staleness", () => {
    let state = initialState();
    state = reduce(state, { kind: "stream-open" });
    assert.equal(state.connection, "live");
    state = reduce(state, { kind: "stream-lost" });
    assert.equal(state.connection, "disconnected");
});
test("role follows token presence", () => {
    let state = initialState();
    assert.equal(state.role, "user");
    state = reduce(state, { kind: "token", present: true });
    assert.equal(state.role, "admin");
    state = reduce(state, { kind: "token", present: false });
    assert.equal(state.role, "user");
});
test("401 drops back to user role and records the error", () => {
    let state = initialState();
    state = reduce(state, { kind: "token", present: true });
    state = reduce(state, {
        kind: "action-failed",
        target: "shutdown",
        status: 401,
        message: "admin token required",
    });
    assert.equal(state.role, "user");
    assert.equal(state.errors["shutdown"], "admin token required");
});
test("404 on a release stays inline on that row", () => {
    let state = initialState();
    state = reduce(state, { kind: "token", present: true });
    state = reduce(state, {
        kind: "action-failed",
        target: "device-7",
        status: 404,
        message: "no such device: 7",
    });
    assert.equal(state.role, "admin");
    assert.equal(state.errors["device-7"], "no such device: 7");
});
test("review updates only after server confirmation event", () => {
    let state = initialState();
    state = reduce(state, {
        kind: "submissions",
        rows: [
            { id: 0, submitter: "u", credentials: [], status: "pending" },
            { id: 1, submitter: "v", credentials: [], status: "pending" },
        ],
    });
    assert.equal(state.submissions[0].status, "pending");
    state = reduce(state, { kind: "reviewed", id: 0, status: "accepted" });
    assert.equal(state.submissions[0].status, "accepted");
    assert.equal(state.submissions[1].status, "pending");
});
test("shutdown latches and clears its error", () => {
    let state = initialState();
    state = reduce(state, {
        kind: "action-failed", target: "shutdown", status: 503, message: "try again",
    });
    state = reduce(state, { kind: "shutdown-confirmed" });
    assert.equal(state.shutdownLatched, true);
    assert.equal(state.errors["shutdown"], undefined);
});
test("release marks the device row", () => {
    let state = initialState();
    state = reduce(state, {
        kind: "devices",
        rows: [
            { id: 0, state: "vulnerable", up: true, bot_status: "none", last_seen: null, released: false },
        ],
    });
    state = reduce(state, { kind: "released", id: 0 });
    assert.equal(state.devices[0].released, true);
});
test("reducer never mutates its input", () => {
    const state = initialState();
    const frozen = Object.freeze(state);
    const next = reduce(frozen, { kind: "snapshot", snapshot: snap(0), wallNow: 0 });
    assert.notEqual(next, frozen);
    assert.equal(frozen.history.length, 0);
});
