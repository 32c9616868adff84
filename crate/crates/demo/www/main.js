import init, { nystrom_error_curve, circles_decision_map, kernel_spectrum } from "./pkg/lkdl_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(f, out) {
  const r = JSON.parse(f());
  if (r.error) {
    $(out).textContent = "error: " + r.error;
    return null;
  }
  return r;
}

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(40, 10);
  ctx.lineTo(40, h - 30);
  ctx.lineTo(w - 10, h - 30);
  ctx.stroke();
}

function line(ctx, xs, ys, xmax, ymax, w, h, color, logy) {
  const px = (x) => 40 + (x / xmax) * (w - 60);
  const lo = logy ? Math.log10(Math.max(1e-12, Math.min(...ys.filter((y) => y > 0)))) : 0;
  const hi = logy ? Math.log10(ymax) : ymax;
  const py = (y) => {
    const v = logy ? Math.log10(Math.max(y, 1e-12)) : y;
    return h - 30 - ((v - lo) / (hi - lo || 1)) * (h - 50);
  };
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
}

function errorCurve() {
  const r = call(() => nystrom_error_curve($("ek").value, num("ep"), $("es").value, num("en"), 7), "eout");
  if (!r) return;
  const c = $("ecanvas"), ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const ymax = Math.max(...r.errors, ...r.svd, 1e-12);
  const xmax = Math.max(...r.fractions);
  line(ctx, r.fractions, r.errors, xmax, ymax, c.width, c.height, "#c33", true);
  line(ctx, r.fractions, r.svd, xmax, ymax, c.width, c.height, "#36c", true);
  $("eout").textContent = "c/N      nystrom    svd bound\n" +
    r.fractions.map((f, i) => `${f.toFixed(2)}     ${r.errors[i].toExponential(2)}   ${r.svd[i].toExponential(2)}`).join("\n");
}

function circles() {
  const r = call(() => circles_decision_map(num("cs"), num("cc"), num("ck"), num("cn"), 80, num("cseed")), "cout");
  if (!r) return;
  const c = $("ccanvas"), ctx = c.getContext("2d");
  const cell = c.width / r.grid;
  r.labels.forEach((l, i) => {
    ctx.fillStyle = l === 1 ? "#fde0dd" : "#deebf7";
    ctx.fillRect((i % r.grid) * cell, Math.floor(i / r.grid) * cell, cell + 1, cell + 1);
  });
  const toPx = (x) => ((x + r.extent) / (2 * r.extent)) * c.width;
  const toPy = (y) => ((r.extent - y) / (2 * r.extent)) * c.height;
  for (const [x, y, l] of r.train) {
    ctx.fillStyle = l === 1 ? "#c33" : "#36c";
    ctx.fillRect(toPx(x) - 1.5, toPy(y) - 1.5, 3, 3);
  }
  ctx.strokeStyle = "#000";
  for (const [x, y] of r.landmarks) {
    ctx.beginPath();
    ctx.arc(toPx(x), toPy(y), 4, 0, 2 * Math.PI);
    ctx.stroke();
  }
  $("cout").textContent = `accuracy  lkdl ${r.accuracy_lkdl.toFixed(3)}  linear ${r.accuracy_linear.toFixed(3)}`;
}

function spectrum() {
  const r = call(() => kernel_spectrum($("sk").value, num("sp"), $("ss").value, num("sc"), 3), "sout");
  if (!r) return;
  const c = $("scanvas"), ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const idx = r.eigenvalues.map((_, i) => i + 1);
  line(ctx, idx, r.eigenvalues, idx.length, Math.max(...r.eigenvalues, 1e-12), c.width, c.height, "#333", true);
  const k90 = r.captured.findIndex((v) => v >= 0.9) + 1;
  $("sout").textContent = `largest ${r.eigenvalues[0].toExponential(3)}, 90% of the trace in ${k90} of ${idx.length} eigenvalues`;
}

await init();
$("erun").onclick = errorCurve;
$("crun").onclick = circles;
$("srun").onclick = spectrum;
errorCurve();
circles();
spectrum();
