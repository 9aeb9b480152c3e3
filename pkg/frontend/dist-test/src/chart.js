// Hand-rolled canvas time-series chart: six lines over the snapshot ring.
// No chart library so the dashboard ships as static files with zero
// runtime dependencies.
import { SERIES_KEYS } from "./types.js";
export const SERIES_COLORS = {
    vulnerable: "#e8b44c",
    infected_black: "#e0515f",
    infected_white: "#7ec8e3",
    secured_temp: "#a4d4ae",
    secured_perm: "#3fa46a",
    live_bots: "#b39ddb",
};
const PAD = { left: 44, right: 12, top: 10, bottom: 22 };
export function drawChart(canvas, history) {
    const ctx = canvas.getContext("2d");
    if (!ctx)
        return;
    const { width, height } = canvas;
    ctx.clearRect(0, 0, width, height);
    if (history.length < 2) {
        ctx.fillStyle = "#888";
        ctx.font = "13px sans-serif";
        ctx.fillText("waiting for samples…", PAD.left, height / 2);
        return;
    }
    const t0 = history[0].sim_time;
    const t1 = history[history.length - 1].sim_time;
    const span = Math.max(t1 - t0, 1e-9);
    let yMax = 1;
    for (const snap of history) {
        for (const key of SERIES_KEYS) {
            if (snap[key] > yMax)
                yMax = snap[key];
        }
    }
    const x = (t) => PAD.left + ((t - t0) / span) * (width - PAD.left - PAD.right);
    const y = (v) => height - PAD.bottom - (v / yMax) * (height - PAD.top - PAD.bottom);
    ctx.strokeStyle = "#333";
    ctx.fillStyle = "#888";
    ctx.font = "11px sans-serif";
    ctx.lineWidth = 1;
    for (let i = 0; i <= 4; i++) {
        const v = (yMax / 4) * i;
        const yy = y(v);
        ctx.beginPath();
        ctx.moveTo(PAD.left, yy);
        ctx.lineTo(width - PAD.right, yy);
        ctx.stroke();
        ctx.fillText(String(Math.round(v)), 4, yy + 4);
    }
    ctx.fillText(`t=${t0.toFixed(0)}s`, PAD.left, height - 6);
    const endLabel = `t=${t1.toFixed(0)}s`;
    ctx.fillText(endLabel, width - PAD.right - ctx.measureText(endLabel).width, height - 6);
    for (const key of SERIES_KEYS) {
        ctx.strokeStyle = SERIES_COLORS[key];
        ctx.lineWidth = key === "live_bots" ? 1.2 : 2;
        ctx.beginPath();
        history.forEach((snap, i) => {
            const px = x(snap.sim_time);
            const py = y(snap[key]);
            if (i === 0)
                ctx.moveTo(px, py);
            else
                ctx.lineTo(px, py);
        });
        ctx.stroke();
    }
}
