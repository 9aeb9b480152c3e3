// View state as a pure function of received snapshots, confirmed API
// responses, and the token role. No optimistic mutation: admin rows change
// only after the server said 200. Reducer purity keeps the UI replayable
// in tests without a DOM.

import { DeviceRow, Snapshot, SubmissionRow } from "./types.js";

export type Role = "user" | "admin";
export type Connection = "connecting" | "live" | "stale" | "disconnected";

export const HISTORY_LIMIT = 720;
export const DEFAULT_TICK_MS = 1000;

export interface ViewState {
    role: Role;
    connection: Connection;
    latest: Snapshot | null;
    history: Snapshot[];
    lastTickWall: number | null;
    tickMillis: number;
    devices: DeviceRow[];
    submissions: SubmissionRow[];
    shutdownLatched: boolean;
    errors: Record<string, string>;
}

export type ViewEvent =
    | { kind: "token"; present: boolean }
    | { kind: "stream-open" }
    | { kind: "stream-lost" }
    | { kind: "snapshot"; snapshot: Snapshot; wallNow: number }
    | { kind: "clock"; wallNow: number }
    | { kind: "devices"; rows: DeviceRow[] }
    | { kind: "submissions"; rows: SubmissionRow[] }
    | { kind: "submitted"; row: SubmissionRow }
    | { kind: "reviewed"; id: number; status: "accepted" | "rejected" }
    | { kind: "shutdown-confirmed" }
    | { kind: "released"; id: number }
    | { kind: "action-failed"; target: string; status: number; message: string };

export function initialState(): ViewState {
    return {
        role: "user",
        connection: "connecting",
        latest: null,
        history: [],
        lastTickWall: null,
        tickMillis: DEFAULT_TICK_MS,
        devices: [],
        submissions: [],
        shutdownLatched: false,
        errors: {},
    };
}

export function reduce(state: ViewState, event: ViewEvent): ViewState {
    switch (event.kind) {
        case "token":
            return { ...state, role: event.present ? "admin" : "user" };

        case "stream-open":
            return { ...state, connection: "live" };

        case "stream-lost":
            return { ...state, connection: "disconnected" };

        case "snapshot": {
            const history = [...state.history, event.snapshot];
            if (history.length > HISTORY_LIMIT) {
                history.splice(0, history.length - HISTORY_LIMIT);
            }
            // Observed cadence feeds the staleness rule below.
            const gap =
                state.lastTickWall !== null ? event.wallNow - state.lastTickWall : null;
            const tickMillis =
                gap !== null && gap > 0
                    ? Math.min(Math.max(gap, 50), 60_000)
                    : state.tickMillis;
            return {
                ...state,
                connection: "live",
                latest: event.snapshot,
                history,
                lastTickWall: event.wallNow,
                tickMillis,
            };
        }

        case "clock": {
            if (state.connection !== "live" || state.lastTickWall === null) {
                return state;
            }
            // Stale after two missed sampling ticks.
            if (event.wallNow - state.lastTickWall > 2 * state.tickMillis) {
                return { ...state, connection: "stale" };
            }
            return state;
        }

        case "devices":
            return { ...state, devices: event.rows };

        case "submissions":
            return { ...state, submissions: event.rows };

        case "submitted":
            return { ...state, submissions: [...state.submissions, event.row] };

        case "reviewed":
            return {
                ...state,
                submissions: state.submissions.map((s) =>
                    s.id === event.id ? { ...s, status: event.status } : s,
                ),
                errors: dropKey(state.errors, `submission-${event.id}`),
            };

        case "shutdown-confirmed":
            return { ...state, shutdownLatched: true, errors: dropKey(state.errors, "shutdown") };

        case "released":
            return {
                ...state,
                devices: state.devices.map((d) =>
                    d.id === event.id ? { ...d, released: true } : d,
                ),
                errors: dropKey(state.errors, `device-${event.id}`),
            };

        case "action-failed": {
            const errors = { ...state.errors, [event.target]: event.message };
            if (event.status === 401) {
                // Bad or missing token: drop back to user mode, controls hide.
                return { ...state, role: "user", errors };
            }
            return { ...state, errors };
        }
    }
}

function dropKey(errors: Record<string, string>, key: string): Record<string, string> {
    if (!(key in errors)) return errors;
    const next = { ...errors };
    delete next[key];
    return next;
}
