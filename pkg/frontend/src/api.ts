// REST client for the CNC API. The bearer token travels only in the
// Authorization header, never in URLs, and every request stays inside the
// documented /api surface.

import { CredentialPair, DeviceRow, Snapshot, SubmissionRow } from "./types.js";

const MAX_CREDENTIAL_BYTES = 64;

export class ApiError extends Error {
    constructor(
        public status: number,
        message: string,
    ) {
        super(message);
    }
}

/** Client-side validation mirroring the server's credential limits; returns
 *  an error message or null. Runs before any network call. */
export function validateBatch(batch: CredentialPair[]): string | null {
    if (batch.length === 0) {
        return "credential batch is empty";
    }
    const byteLen = (s: string) => new TextEncoder().encode(s).length;
    for (const pair of batch) {
        if (!pair.username || !pair.password) {
            return "username and password must be non-empty";
        }
        if (byteLen(pair.username) > MAX_CREDENTIAL_BYTES || byteLen(pair.password) > MAX_CREDENTIAL_BYTES) {
            return `fields are limited to ${MAX_CREDENTIAL_BYTES} bytes`;
        }
    }
    return null;
}

export class ApiClient {
    constructor(
        private base: string,
        private token: string | null = null,
        private fetchImpl: typeof fetch = fetch,
    ) {}

    setToken(token: string | null): void {
        this.token = token;
    }

    hasToken(): boolean {
        return this.token !== null && this.token.length > 0;
    }

    private async request(
        method: string,
        path: string,
        body?: unknown,
        admin = false,
    ): Promise<unknown> {
        const headers: Record<string, string> = {};
        if (body !== undefined) {
            headers["content-type"] = "application/json";
        }
        if (admin) {
            headers["authorization"] = `Bearer ${this.token ?? ""}`;
        }
        const resp = await this.fetchImpl(this.base + path, {
            method,
            headers,
            body: body !== undefined ? JSON.stringify(body) : undefined,
        });
        if (!resp.ok) {
            let detail = `${resp.status}`;
            try {
                const parsed = (await resp.json()) as { detail?: string };
                if (parsed.detail) detail = parsed.detail;
            } catch {
                // non-JSON error body: keep the status text
            }
            throw new ApiError(resp.status, detail);
        }
        return resp.json();
    }

    getStats(): Promise<Snapshot> {
        return this.request("GET", "/api/stats") as Promise<Snapshot>;
    }

    getHistory(from?: number, to?: number): Promise<Snapshot[]> {
        const params = new URLSearchParams();
        if (from !== undefined) params.set("from", String(from));
        if (to !== undefined) params.set("to", String(to));
        const qs = params.toString();
        return this.request("GET", `/api/stats/history${qs ? "?" + qs : ""}`) as Promise<Snapshot[]>;
    }

    getDevices(): Promise<DeviceRow[]> {
        return this.request("GET", "/api/devices") as Promise<DeviceRow[]>;
    }

    submit(batch: CredentialPair[], submitter: string): Promise<{ id: number; status: string }> {
        return this.request("POST", "/api/submissions", {
            submitter,
            credentials: batch,
        }) as Promise<{ id: number; status: string }>;
    }

    listSubmissions(): Promise<SubmissionRow[]> {
        return this.request("GET", "/api/submissions", undefined, true) as Promise<SubmissionRow[]>;
    }

    review(id: number, verdict: "accept" | "reject"): Promise<{ id: number; status: string }> {
        return this.request("POST", `/api/submissions/${id}/review`, { verdict }, true) as Promise<{
            id: number;
            status: string;
        }>;
    }

    shutdown(): Promise<{ shutdown: boolean }> {
        return this.request("POST", "/api/admin/shutdown", {}, true) as Promise<{ shutdown: boolean }>;
    }

    release(deviceId: number): Promise<{ released: number }> {
        return this.request("POST", "/api/admin/release", { device_id: deviceId }, true) as Promise<{
            released: number;
        }>;
    }
}
