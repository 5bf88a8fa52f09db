import init, { rdp_curves, privacy_vs_rounds, simulate_sgd } from "./pkg/subshuffle_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

function inputs(section) {
  const v = {};
  for (const el of section.querySelectorAll("input")) v[el.name] = Number(el.value);
  return v;
}

// Log-log line plot. series: [{name, xs, ys}]
function plot(canvas, series, xlabel, ylabel) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, m = { l: 70, r: 20, t: 20, b: 45 };
  ctx.clearRect(0, 0, W, H);
  const pts = series.flatMap(s => s.xs.map((x, i) => [x, s.ys[i]])).filter(([x, y]) => x > 0 && y > 0);
  if (!pts.length) return;
  const lx = pts.map(p => Math.log10(p[0])), ly = pts.map(p => Math.log10(p[1]));
  let [x0, x1] = [Math.min(...lx), Math.max(...lx)];
  let [y0, y1] = [Math.floor(Math.min(...ly)), Math.ceil(Math.max(...ly))];
  if (x1 === x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 === y0) y1 += 1;
  const px = x => m.l + (Math.log10(x) - x0) / (x1 - x0) * (W - m.l - m.r);
  const py = y => H - m.b - (Math.log10(y) - y0) / (y1 - y0) * (H - m.t - m.b);

  ctx.strokeStyle = "#999"; ctx.fillStyle = "#333"; ctx.font = "12px sans-serif";
  ctx.strokeRect(m.l, m.t, W - m.l - m.r, H - m.t - m.b);
  for (let e = y0; e <= y1; e++) {
    const y = py(10 ** e);
    ctx.fillText(`1e${e}`, 8, y + 4);
    ctx.beginPath(); ctx.moveTo(m.l - 4, y); ctx.lineTo(m.l, y); ctx.stroke();
  }
  for (let e = Math.ceil(x0); e <= Math.floor(x1); e++) {
    const x = px(10 ** e);
    ctx.fillText(`1e${e}`, x - 12, H - m.b + 16);
  }
  ctx.fillText(xlabel, W / 2, H - 8);
  ctx.save(); ctx.translate(14, H / 2 + 40); ctx.rotate(-Math.PI / 2); ctx.fillText(ylabel, 0, 0); ctx.restore();

  series.forEach((s, j) => {
    ctx.strokeStyle = COLORS[j % COLORS.length]; ctx.lineWidth = 2; ctx.beginPath();
    let started = false;
    s.xs.forEach((x, i) => {
      const y = s.ys[i];
      if (!(x > 0 && y > 0)) { started = false; return; }
      started ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y));
      started = true;
    });
    ctx.stroke();
    ctx.fillStyle = COLORS[j % COLORS.length];
    ctx.fillText(s.name, m.l + 10 + 150 * j, m.t + 14);
  });
}

function wire(id, action) {
  const section = document.getElementById(id);
  const out = section.querySelector(".out");
  section.querySelector("button").addEventListener("click", () => {
    out.className = "out";
    try {
      out.textContent = action(inputs(section), section.querySelector("canvas"));
    } catch (e) {
      out.className = "out err";
      out.textContent = String(e);
    }
  });
}

wire("curves", (v, canvas) => {
  const r = JSON.parse(rdp_curves(v.n, v.k, v.eps0, v.lambda_max));
  plot(canvas, [
    { name: "upper bound", xs: r.lambda, ys: r.upper },
    { name: "lower bound", xs: r.lambda, ys: r.lower },
  ], "order lambda", "eps(lambda)");
  return `eps(2): upper ${r.upper[0].toExponential(4)}, lower ${r.lower[0].toExponential(4)}`;
});

wire("rounds", (v, canvas) => {
  const delta = Number(document.querySelector("#rounds input[name=delta]").value);
  const r = JSON.parse(privacy_vs_rounds(v.n, v.k, v.eps0, delta, v.t_max, 24));
  plot(canvas, [
    { name: "ours", xs: r.rounds, ys: r.ours },
    { name: "baseline", xs: r.rounds, ys: r.baseline },
    { name: "lower reference", xs: r.rounds, ys: r.lower },
  ], "rounds T", "eps");
  const i = r.rounds.length - 1;
  const regime = r.degenerate[i] ? " (baseline degenerate: no shuffle amplification)" : "";
  return `T = ${r.rounds[i]}: ours ${r.ours[i].toFixed(4)}, baseline ${r.baseline[i].toFixed(4)}, ` +
    `ratio ${(r.baseline[i] / r.ours[i]).toFixed(2)}${regime}`;
});

wire("sgd", (v, canvas) => {
  const r = JSON.parse(simulate_sgd(v.d, v.n, v.k, v.eps0, v.rounds, v.seed));
  plot(canvas, [
    { name: "F(theta_t) - F*", xs: r.round.map(t => Math.max(t, 1)), ys: r.suboptimality },
    { name: "4x guarantee", xs: [1, r.round[r.round.length - 1]], ys: [r.convergence_bound, r.convergence_bound] },
  ], "round t", "suboptimality");
  const last = r.suboptimality[r.suboptimality.length - 1];
  return `final suboptimality ${last.toExponential(3)}; (${r.eps.toFixed(3)}, ${r.delta})-DP`;
});

await init();
for (const b of document.querySelectorAll("button")) b.click();
