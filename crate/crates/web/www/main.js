import init, { estimate_ptf, bisection_trace, simulate_demo } from "./pkg/anysched_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(out, f) {
  const v = JSON.parse(f());
  if (v.error) {
    out.textContent = v.error;
    out.className = "error";
    return null;
  }
  out.className = "";
  return v;
}

// Draws series of [x, y] points into a panel of the canvas.
function plot(ctx, box, series, { xlabel = "", ylabel = "", zero = false } = {}) {
  const all = series.flatMap((s) => s.points);
  if (all.length === 0) return;
  let [x0, x1] = [Math.min(...all.map((p) => p[0])), Math.max(...all.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...all.map((p) => p[1])), Math.max(...all.map((p) => p[1]))];
  if (zero) { y0 = Math.min(y0, 0); y1 = Math.max(y1, 0); }
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const pad = 40;
  const sx = (x) => box.x + pad + ((x - x0) / (x1 - x0)) * (box.w - pad - 10);
  const sy = (y) => box.y + box.h - 20 - ((y - y0) / (y1 - y0)) * (box.h - 30);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(box.x + pad, box.y + 10, box.w - pad - 10, box.h - 30);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(y1.toPrecision(3), box.x + 2, box.y + 14);
  ctx.fillText(y0.toPrecision(3), box.x + 2, box.y + box.h - 20);
  ctx.fillText(`${xlabel} ${x0.toPrecision(3)} .. ${x1.toPrecision(3)}`, box.x + pad, box.y + box.h - 5);
  ctx.fillText(ylabel, box.x + pad + 5, box.y + 22);
  if (zero) {
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(sx(x0), sy(0));
    ctx.lineTo(sx(x1), sy(0));
    ctx.stroke();
  }
  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.dots) {
      for (const [x, y] of s.points) ctx.fillRect(sx(x) - 1.5, sy(y) - 1.5, 3, 3);
    } else {
      ctx.beginPath();
      s.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
      ctx.stroke();
    }
  }
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function runEstimate() {
  const out = $("ptf-out");
  const v = call(out, () => estimate_ptf($("curve").value, num("speed"), num("wct")));
  const canvas = $("ptf-canvas");
  const ctx = clear(canvas);
  if (!v) return;
  const lo = v.trimmed[0][1];
  const hi = v.trimmed[v.trimmed.length - 1][1];
  const normalized = v.trimmed.map(([t, y]) => [t, (y - lo) / (hi - lo)]);
  const ptf = [[0, 0], ...v.ptf.map((t, k) => [t, (k + 1) / 10])];
  plot(ctx, { x: 0, y: 0, w: canvas.width, h: canvas.height }, [
    { points: normalized, color: "#888", dots: true },
    { points: ptf, color: "#1f77b4" },
  ], { xlabel: "normalized time (ms)", ylabel: "quality" });
  out.textContent = `kept ${v.kept} points\nPTF endpoints (ms): ${v.ptf.join(", ")}`;
}

function runBisection() {
  const out = $("b-out");
  const v = call(out, () => bisection_trace(num("b-seed"), num("b-tasks"), num("b-res"), num("b-minq")));
  const canvas = $("b-canvas");
  const ctx = clear(canvas);
  if (!v) return;
  plot(ctx, { x: 0, y: 0, w: canvas.width, h: canvas.height }, [
    { points: v.curve, color: "#1f77b4" },
    { points: v.steps.map((s) => [s.quality, s.lateness]), color: "#d62728", dots: true },
  ], { xlabel: "quality", ylabel: "avg normalized lateness", zero: true });
  const steps = v.steps.slice(0, 8).map((s) => `  ${s.iteration}: q ${s.quality.toFixed(4)}  lateness ${s.lateness.toFixed(4)}`);
  out.textContent = `${v.branch}: q ${v.quality.toFixed(4)}, lateness ${v.lateness.toFixed(4)}\n` +
    (steps.length ? `first steps:\n${steps.join("\n")}` : "");
}

function runSimulation() {
  const out = $("s-out");
  out.textContent = "running...";
  const v = call(out, () =>
    simulate_demo(num("s-seed"), num("s-tasks"), num("s-res"), $("s-control").value, $("s-est").value));
  const canvas = $("s-canvas");
  const ctx = clear(canvas);
  if (!v) return;
  const h = canvas.height / 3;
  const w = canvas.width;
  plot(ctx, { x: 0, y: 0, w, h }, [{ points: v.pending, color: "#1f77b4" }], { ylabel: "pending tasks" });
  plot(ctx, { x: 0, y: h, w, h }, [
    { points: v.completions.map((p) => [p.completion, p.lateness]), color: "#d62728", dots: true },
  ], { ylabel: "normalized lateness", zero: true });
  plot(ctx, { x: 0, y: 2 * h, w, h }, [
    { points: v.completions.map((p) => [p.completion, p.quality]), color: "#2ca02c", dots: true },
  ], { xlabel: "completion time (ms)", ylabel: "solution quality" });
  out.textContent = `${v.tasks} tasks, ${v.control}: avg quality ${v.avg_quality.toFixed(3)}, ` +
    `avg normalized lateness ${v.avg_lateness.toFixed(3)}, max ${v.max_lateness.toFixed(3)}`;
}

await init();
$("estimate").onclick = runEstimate;
$("bisect").onclick = runBisection;
$("simulate").onclick = runSimulation;
runEstimate();
runBisection();
