// Wire shapes from the CNC API. Key order and field names are the contract;
// the dashboard never recomputes state tags client-side.
export const SERIES_KEYS = [
    "vulnerable",
    "infected_black",
    "infected_white",
    "secured_temp",
    "secured_perm",
    "live_bots",
];
