// Wire shapes from the CNC API. Key order and field names are the contract;
// the dashboard never recomputes state tags client-side.

export interface Snapshot {
    sim_time: number;
    vulnerable: number;
    infected_black: number;
    infected_white: number;
    secured_temp: number;
    secured_perm: number;
    live_bots: number;
}

export interface DeviceRow {
    id: number;
    state: string;
    up: boolean;
    bot_status: string;
    last_seen: number | null;
    released: boolean;
}

export interface CredentialPair {
    username: string;
    password: string;
}

export interface SubmissionRow {
    id: number;
    submitter: string;
    credentials: CredentialPair[];
    status: "pending" | "accepted" | "rejected";
}

export const SERIES_KEYS = [
    "vulnerable",
    "infected_black",
    "infected_white",
    "secured_temp",
    "secured_perm",
    "live_bots",
] as const;

export type SeriesKey = (typeof SERIES_KEYS)[number];
