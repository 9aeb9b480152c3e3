// REST client for the CNC API. The bearer token travels only in the
// Authorization header, never in URLs, and every request stays inside the
// documented /api surface.
const MAX_CREDENTIAL_BYTES = 64;
export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
/** Client-side validation mirroring the server's credential limits; returns
 *  an error message or null. Runs before any network call. */
export function validateBatch(batch) {
    if (batch.length === 0) {
        return "credential batch is empty";
    }
    const byteLen = (s) => new TextEncoder().encode(s).length;
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
    base;
    token;
    fetchImpl;
    constructor(base, token = null, fetchImpl = fetch) {
        this.base = base;
        this.token = token;
        this.fetchImpl = fetchImpl;
    }
    setToken(token) {
        this.token = token;
    }
    hasToken() {
        return this.token !== null && this.token.length > 0;
    }
    async request(method, path, body, admin = false) {
        const headers = {};
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
                const parsed = (await resp.json());
                if (parsed.detail)
                    detail = parsed.detail;
            }
            catch {
                // non-JSON error body: keep the status text
            }
            throw new ApiError(resp.status, detail);
        }
        return resp.json();
    }
    getStats() {
        return this.request("GET", "/api/stats");
    }
    getHistory(from, to) {
        const params = new URLSearchParams();
        if (from !== undefined)
            params.set("from", String(from));
        if (to !== undefined)
            params.set("to", String(to));
        const qs = params.toString();
        return this.request("GET", `/api/stats/history${qs ? "?" + qs : ""}`);
    }
    getDevices() {
        return this.request("GET", "/api/devices");
    }
    submit(batch, submitter) {
        return this.request("POST", "/api/submissions", {
            submitter,
            credentials: batch,
        });
    }
    listSubmissions() {
        return this.request("GET", "/api/submissions", undefined, true);
    }
    review(id, verdict) {
        return this.request("POST", `/api/submissions/${id}/review`, { verdict }, true);
    }
    shutdown() {
        return this.request("POST", "/api/admin/shutdown", {}, true);
    }
    release(deviceId) {
        return this.request("POST", "/api/admin/release", { device_id: deviceId }, true);
    }
}
