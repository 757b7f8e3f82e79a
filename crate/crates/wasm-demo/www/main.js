import init, { rescale_curves, margin_curves, train_demo } from "./pkg/sface_wasm_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c"];

function values(fieldset) {
  const out = {};
  for (const el of fieldset.querySelectorAll("input, select")) {
    out[el.name] = el.type === "number" ? Number(el.value) : el.value;
  }
  return out;
}

// rows of `width` numbers; column 0 is x, the listed columns are series
function plot(canvas, flat, width, columns, xLabel) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 40;
  ctx.clearRect(0, 0, W, H);
  const rows = [];
  for (let i = 0; i + width <= flat.length; i += width) rows.push(flat.subarray(i, i + width));
  const xs = rows.map(r => r[0]);
  const ys = rows.flatMap(r => columns.map(c => r[c])).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(0, ...ys), Math.max(...ys) || 1];
  const px = x => pad + (x - x0) / (x1 - x0 || 1) * (W - 2 * pad);
  const py = y => H - pad - (y - y0) / (y1 - y0 || 1) * (H - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toFixed(2), pad, H - pad + 14);
  ctx.fillText(x1.toFixed(2), W - pad - 24, H - pad + 14);
  ctx.fillText(y1.toFixed(1), 4, pad + 4);
  ctx.fillText(y0.toFixed(1), 4, H - pad);
  ctx.fillText(xLabel, W / 2, H - 8);

  columns.forEach((c, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    let pen = false;
    for (const r of rows) {
      if (!Number.isFinite(r[c])) { pen = false; continue; }
      pen ? ctx.lineTo(px(r[0]), py(r[c])) : ctx.moveTo(px(r[0]), py(r[c]));
      pen = true;
    }
    ctx.stroke();
  });
}

function guarded(errEl, body) {
  try {
    body();
    errEl.textContent = "";
  } catch (e) {
    errEl.textContent = String(e.message ?? e);
  }
}

function drawRescale() {
  const v = values(document.getElementById("rescale"));
  guarded(document.getElementById("rescale-err"), () => {
    const flat = rescale_curves(v.family, v.s, v.k, v.a, v.b, 801);
    plot(document.getElementById("rescale-plot"), flat, 3, [1, 2], "θ (rad)");
  });
}

function drawMargin() {
  const v = values(document.getElementById("margin"));
  guarded(document.getElementById("margin-err"), () => {
    const flat = margin_curves(v.variant, v.s, v.m, v.classes, v.ref, 801);
    plot(document.getElementById("margin-plot"), flat, 3, [1, 2], "θ (rad)");
  });
}

function runTraining() {
  const v = values(document.getElementById("train"));
  const summary = document.getElementById("train-summary");
  guarded(summary, () => {
    const flat = train_demo(v.loss, v.a, v.b, v.m, v.flip, v.steps, BigInt(v.seed));
    const last = flat.subarray(flat.length - 5);
    const trace = flat.subarray(0, flat.length - 5);
    plot(document.getElementById("train-plot"), trace, 5, [2, 3, 4], "step");
    const fmt = x => (Number.isFinite(x) ? x.toFixed(2) : "n/a");
    summary.textContent =
      `delta intra ${fmt(last[1])}°   inter ${fmt(last[2])}° ± ${fmt(last[3])}°   ` +
      `max norm drift ${last[4].toExponential(2)}`;
  });
}

await init();
document.getElementById("rescale").addEventListener("input", drawRescale);
document.getElementById("margin").addEventListener("input", drawMargin);
document.getElementById("run").addEventListener("click", runTraining);
drawRescale();
drawMargin();
runTraining();
