import init, { krigingCurve, ellipsoidDesign, toyUq } from "./pkg/mabs_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Small deterministic generator for the demo's synthetic outputs.
function mulberry32(seed) {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gauss(rand) {
  const u = Math.max(rand(), 1e-12);
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * rand());
}

function frame(canvas, xs, ys) {
  const ctx = canvas.getContext("2d");
  const pad = 40;
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (canvas.width - 2 * pad);
  const sy = (y) => canvas.height - pad - ((y - y0) / (y1 - y0 || 1)) * (canvas.height - 2 * pad);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toFixed(2), pad, canvas.height - pad + 14);
  ctx.fillText(x1.toFixed(2), canvas.width - pad - 30, canvas.height - pad + 14);
  ctx.fillText(y1.toFixed(2), 2, pad + 4);
  ctx.fillText(y0.toFixed(2), 2, canvas.height - pad);
  return { ctx, sx, sy };
}

function report(id, fn) {
  try {
    $(id).className = "out";
    $(id).textContent = fn();
  } catch (e) {
    $(id).className = "out err";
    $(id).textContent = String(e.message ?? e);
  }
}

function runKriging() {
  report("k-out", () => {
    const n = num("k-n"), sd = num("k-sd"), reps = num("k-reps");
    const rand = mulberry32(num("k-seed"));
    const f = (x) => Math.sin(x) + x / 3;
    const xs = [], ys = [], vs = [];
    for (let i = 0; i < n; i++) {
      const x = (6 * (i + rand())) / n;
      const s = sd * (0.5 + x / 6);
      xs.push(x);
      vs.push(s * s);
      ys.push(f(x) + (s / Math.sqrt(reps)) * gauss(rand));
    }
    const c = JSON.parse(krigingCurve(xs, ys, vs, reps, 200));
    const { ctx, sx, sy } = frame($("k-plot"), c.x, [...c.lo, ...c.hi, ...ys]);
    ctx.fillStyle = "rgba(70,130,180,0.2)";
    ctx.beginPath();
    c.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(c.hi[i])) : ctx.moveTo(sx(x), sy(c.hi[i]))));
    for (let i = c.x.length - 1; i >= 0; i--) ctx.lineTo(sx(c.x[i]), sy(c.lo[i]));
    ctx.fill();
    ctx.strokeStyle = "#999";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    c.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(f(x))) : ctx.moveTo(sx(x), sy(f(x)))));
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.strokeStyle = "steelblue";
    ctx.lineWidth = 2;
    ctx.beginPath();
    c.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(c.mean[i])) : ctx.moveTo(sx(x), sy(c.mean[i]))));
    ctx.stroke();
    ctx.lineWidth = 1;
    ctx.fillStyle = "#c33";
    xs.forEach((x, i) => ctx.fillRect(sx(x) - 3, sy(ys[i]) - 3, 6, 6));
    return `beta0 = ${c.beta0.toFixed(4)}   tau2 = ${c.tau2.toFixed(4)}   theta = ${c.theta.toFixed(4)}`;
  });
}

function runDesign() {
  report("e-out", () => {
    const d = JSON.parse(ellipsoidDesign(num("e-m"), num("e-b"), num("e-q"), num("e-k"), num("e-seed")));
    const all = [...d.cloud, ...d.points];
    const { ctx, sx, sy } = frame($("e-plot"), all.map((p) => p[0]), all.map((p) => p[1]));
    ctx.fillStyle = "rgba(100,100,100,0.35)";
    d.cloud.forEach((p) => ctx.fillRect(sx(p[0]) - 1, sy(p[1]) - 1, 2, 2));
    // Boundary: center + sqrt(r2) * L * (cos t, sin t) with L the Cholesky factor of the shape.
    const [[a, b], [, c]] = d.shape;
    const l11 = Math.sqrt(a), l21 = b / l11, l22 = Math.sqrt(c - l21 * l21);
    const r = Math.sqrt(d.radius2);
    ctx.strokeStyle = "darkorange";
    ctx.lineWidth = 2;
    ctx.beginPath();
    for (let i = 0; i <= 200; i++) {
      const t = (2 * Math.PI * i) / 200;
      const u = Math.cos(t), v = Math.sin(t);
      const x = d.center[0] + r * l11 * u, y = d.center[1] + r * (l21 * u + l22 * v);
      i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y));
    }
    ctx.stroke();
    ctx.lineWidth = 1;
    ctx.fillStyle = "#c33";
    d.points.forEach((p) => ctx.fillRect(sx(p[0]) - 3, sy(p[1]) - 3, 6, 6));
    return `center = (${d.center.map((v) => v.toFixed(3)).join(", ")})   radius2 = ${d.radius2.toFixed(3)}   (x: mean, y: std)`;
  });
}

function histogram(values, lo, hi, bins) {
  const h = new Array(bins).fill(0);
  values.forEach((v) => {
    const i = Math.min(bins - 1, Math.max(0, Math.floor(((v - lo) / (hi - lo)) * bins)));
    h[i] += 1;
  });
  return h;
}

function runUq() {
  report("u-out", () => {
    const r = JSON.parse(toyUq(num("u-m"), num("u-b"), num("u-n"), num("u-seed")));
    const all = [...r.mu_b, ...r.m_b, r.truth];
    const lo = Math.min(...all), hi = Math.max(...all), bins = 40;
    const h0 = histogram(r.mu_b, lo, hi, bins), hp = histogram(r.m_b, lo, hi, bins);
    const top = Math.max(...h0, ...hp);
    const { ctx, sx, sy } = frame($("u-plot"), [lo, hi], [0, top]);
    const w = (sx(hi) - sx(lo)) / bins;
    const bar = (h, color, shift) => {
      ctx.fillStyle = color;
      h.forEach((c, i) => ctx.fillRect(sx(lo) + i * w + shift, sy(c), w / 2, sy(0) - sy(c)));
    };
    bar(h0, "rgba(70,130,180,0.8)", 0);
    bar(hp, "rgba(204,51,51,0.7)", w / 2);
    const vline = (x, color) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      ctx.moveTo(sx(x), sy(0));
      ctx.lineTo(sx(x), sy(top));
      ctx.stroke();
    };
    vline(r.truth, "black");
    [r.ci_plus[0], r.ci_plus[1]].forEach((x) => vline(x, "#c33"));
    const f = (p) => `[${p[0].toFixed(3)}, ${p[1].toFixed(3)}]`;
    return `truth 5.15   CI0 ${f(r.ci0)}   CI+ ${f(r.ci_plus)}   sigma2_I ${r.sigma2_i.toExponential(3)}   sigma2_M ${r.sigma2_m.toExponential(3)}`;
  });
}

await init();
$("k-go").onclick = runKriging;
$("e-go").onclick = runDesign;
$("u-go").onclick = runUq;
runKriging();
runDesign();
runUq();
