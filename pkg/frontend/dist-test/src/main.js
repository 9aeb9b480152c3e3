// Dashboard entry point: wires the snapshot stream, the REST client, and
// the pure view-state store to the DOM. All admin mutations are
// friction-gated (confirm dialogs) and reflected only after the server
// confirms them.
import { ApiClient, ApiError, validateBatch } from "./api.js";
import { SERIES_COLORS, drawChart } from "./chart.js";
import { connectStream } from "./sse.js";
import { initialState, reduce } from "./store.js";
import { SERIES_KEYS } from "./types.js";
const api = new ApiClient("");
let state = initialState();
function dispatch(event) {
    state = reduce(state, event);
    render();
}
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
async function adminAction(target, action) {
    try {
        dispatch(await action());
    }
    catch (err) {
        const status = err instanceof ApiError ? err.status : 0;
        const message = err instanceof Error ? err.message : String(err);
        dispatch({ kind: "action-failed", target, status, message });
        if (status === 401) {
            el("token-input").focus();
        }
    }
}
// -- rendering ---------------------------------------------------------------
function render() {
    renderConnection();
    renderCounters();
    drawChart(el("chart"), state.history);
    renderDevices();
    renderSubmissions();
    renderAdminPanel();
}
function renderConnection() {
    const badge = el("conn-badge");
    badge.className = `badge ${state.connection}`;
    badge.textContent = state.connection;
    el("role-badge").textContent = state.role === "admin" ? "admin" : "user";
}
function renderCounters() {
    const snap = state.latest;
    const grid = el("counters");
    if (!snap) {
        grid.innerHTML = "<p class='muted'>no data yet</p>";
        return;
    }
    grid.innerHTML = SERIES_KEYS.map((key) => `
        <div class="counter">
          <span class="dot" style="background:${SERIES_COLORS[key]}"></span>
          <span class="label">${key.replace(/_/g, " ")}</span>
          <span class="value">${snap[key]}</span>
        </div>`).join("");
    el("sim-time").textContent = `sim time ${snap.sim_time.toFixed(1)}s`;
}
function renderDevices() {
    const body = el("device-rows");
    const admin = state.role === "admin";
    body.innerHTML = state.devices
        .map((d) => {
        const error = state.errors[`device-${d.id}`];
        const action = d.released
            ? "<span class='muted'>released</span>"
            : admin
                ? `<button data-release="${d.id}">release</button>`
                : "";
        return `
            <tr>
              <td>${d.id}</td>
              <td><span class="state ${d.state.split(":")[0]}">${d.state}</span></td>
              <td>${d.up ? "up" : "down"}</td>
              <td>${d.bot_status}</td>
              <td>${d.last_seen === null ? "-" : d.last_seen.toFixed(1)}</td>
              <td>${action}${error ? `<span class="error">${error}</span>` : ""}</td>
            </tr>`;
    })
        .join("");
    body.querySelectorAll("button[data-release]").forEach((btn) => {
        btn.addEventListener("click", () => {
            const id = Number(btn.dataset.release);
            if (!window.confirm(`Release device ${id}? It will never be protected again.`)) {
                return;
            }
            void adminAction(`device-${id}`, async () => {
                await api.release(id);
                return { kind: "released", id };
            });
        });
    });
}
function renderSubmissions() {
    const admin = state.role === "admin";
    el("submissions-panel").style.display = admin ? "" : "none";
    if (!admin)
        return;
    const body = el("submission-rows");
    body.innerHTML = state.submissions
        .map((s) => {
        const creds = s.credentials.map((c) => `${c.username}/${c.password}`).join(", ");
        const error = state.errors[`submission-${s.id}`];
        const actions = s.status === "pending"
            ? `<button data-review="${s.id}" data-verdict="accept">accept</button>
                       <button data-review="${s.id}" data-verdict="reject">reject</button>`
            : `<span class="muted">${s.status}</span>`;
        return `
            <tr>
              <td>${s.id}</td>
              <td>${s.submitter}</td>
              <td class="creds">${creds}</td>
              <td>${actions}${error ? `<span class="error">${error}</span>` : ""}</td>
            </tr>`;
    })
        .join("");
    body.querySelectorAll("button[data-review]").forEach((btn) => {
        btn.addEventListener("click", () => {
            const id = Number(btn.dataset.review);
            const verdict = btn.dataset.verdict;
            void adminAction(`submission-${id}`, async () => {
                const result = await api.review(id, verdict);
                return { kind: "reviewed", id, status: result.status };
            });
        });
    });
}
function renderAdminPanel() {
    const admin = state.role === "admin";
    el("admin-panel").style.display = admin ? "" : "none";
    const btn = el("shutdown-btn");
    btn.disabled = state.shutdownLatched;
    btn.textContent = state.shutdownLatched ? "botnet shut down" : "shut down botnet";
    const error = state.errors["shutdown"];
    el("shutdown-error").textContent = error ?? "";
}
// -- wiring ------------------------------------------------------------------
function setupToken() {
    const input = el("token-input");
    el("token-apply").addEventListener("click", () => {
        const token = input.value.trim();
        api.setToken(token || null);
        dispatch({ kind: "token", present: token.length > 0 });
        if (token)
            void refreshSubmissions();
    });
}
function setupSubmitForm() {
    const form = el("submit-form");
    form.addEventListener("submit", (ev) => {
        ev.preventDefault();
        const username = el("cred-user").value;
        const password = el("cred-pass").value;
        const batch = [{ username, password }];
        const problem = validateBatch(batch);
        const note = el("submit-note");
        if (problem) {
            // Local validation failure: no network call at all.
            note.textContent = problem;
            note.className = "error";
            return;
        }
        void (async () => {
            try {
                const result = await api.submit(batch, "dashboard-user");
                note.textContent = `submitted #${result.id} (pending review)`;
                note.className = "muted";
                form.reset();
            }
            catch (err) {
                note.textContent = err instanceof Error ? err.message : String(err);
                note.className = "error";
            }
        })();
    });
}
function setupShutdown() {
    el("shutdown-btn").addEventListener("click", () => {
        if (!window.confirm("Shut down the whole botnet? Every bot terminates and devices lose their guard.")) {
            return;
        }
        void adminAction("shutdown", async () => {
            await api.shutdown();
            return { kind: "shutdown-confirmed" };
        });
    });
}
async function refreshDevices() {
    try {
        dispatch({ kind: "devices", rows: await api.getDevices() });
    }
    catch {
        // transient; the connection badge already tells the story
    }
}
async function refreshSubmissions() {
    if (state.role !== "admin")
        return;
    try {
        dispatch({ kind: "submissions", rows: await api.listSubmissions() });
    }
    catch (err) {
        const status = err instanceof ApiError ? err.status : 0;
        if (status === 401) {
            dispatch({ kind: "action-failed", target: "submissions", status, message: "token rejected" });
        }
    }
}
function start() {
    setupToken();
    setupSubmitForm();
    setupShutdown();
    render();
    connectStream("/api/events/stream", {
        onOpen: () => dispatch({ kind: "stream-open" }),
        onData: (data) => {
            const snapshot = JSON.parse(data);
            dispatch({ kind: "snapshot", snapshot, wallNow: Date.now() });
        },
        onError: () => dispatch({ kind: "stream-lost" }),
    });
    window.setInterval(() => dispatch({ kind: "clock", wallNow: Date.now() }), 500);
    window.setInterval(() => void refreshDevices(), 2000);
    window.setInterval(() => void refreshSubmissions(), 3000);
    void refreshDevices();
}
start();
