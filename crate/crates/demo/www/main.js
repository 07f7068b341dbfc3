import init, { density_grid, simulate_pairs, hb_n_tail } from "./pkg/pcc_demo.js";

const $ = (id) => document.getElementById(id);
const GRID = 120;
const N_SAMPLE = 3000;
const Z = 3;
let seed = 1;

const PARAMS = {
  gauss: [],
  t: [["nu", 6]],
  "hb-n": [["alpha", 2.5], ["beta", -1.0]],
  "skew-t1-t1": [["nu", 8], ["gamma", -0.2]],
};

function showParams() {
  const p = PARAMS[$("family").value];
  $("p1").parentElement.hidden = p.length < 1;
  $("p2-wrap").hidden = p.length < 2;
  if (p[0]) { $("p1-name").textContent = p[0][0]; $("p1").value = p[0][1]; }
  if (p[1]) { $("p2-name").textContent = p[1][0]; $("p2").value = p[1][1]; }
}

function model() {
  return [$("family").value, +$("rho").value, +$("p1").value, +$("p2").value];
}

function report(err) {
  $("error").textContent = err ? String(err.message || err) : "";
}

// Inverse standard normal CDF (Acklam's rational approximation).
function normPpf(p) {
  const a = [-39.69683028665376, 220.9460984245205, -275.9285104469687, 138.357751867269, -30.66479806614716, 2.506628277459239];
  const b = [-54.47609879822406, 161.5858368580409, -155.6989798598866, 66.80131188771972, -13.28068155288572];
  const c = [-0.007784894002430293, -0.3223964580411365, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
  const d = [0.007784695709041462, 0.3224671290700398, 2.445134137142996, 3.754408661907416];
  const lo = 0.02425;
  if (p < lo) {
    const q = Math.sqrt(-2 * Math.log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - lo) return -normPpf(1 - p);
  const q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

function drawDensity() {
  const dens = density_grid(...model(), GRID);
  const ctx = $("density").getContext("2d");
  const img = ctx.createImageData(GRID, GRID);
  let max = 0;
  for (const v of dens) max = Math.max(max, v);
  for (let k = 0; k < dens.length; k++) {
    // square-root scale keeps the tails visible
    const s = Math.sqrt(dens[k] / max);
    img.data[4 * k] = 255 - 200 * s;
    img.data[4 * k + 1] = 255 - 120 * s;
    img.data[4 * k + 2] = 255 - 30 * s;
    img.data[4 * k + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}

function drawScatter() {
  const u = simulate_pairs(...model(), N_SAMPLE, seed);
  const cv = $("scatter");
  const ctx = cv.getContext("2d");
  const w = cv.width;
  ctx.clearRect(0, 0, w, w);
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(w / 2, 0); ctx.lineTo(w / 2, w);
  ctx.moveTo(0, w / 2); ctx.lineTo(w, w / 2);
  ctx.stroke();
  ctx.fillStyle = "rgba(30, 80, 160, 0.45)";
  const px = (z) => ((z + Z) / (2 * Z)) * w;
  for (let k = 0; k < u.length; k += 2) {
    ctx.fillRect(px(normPpf(u[k])) - 1, w - px(normPpf(u[k + 1])) - 1, 2, 2);
  }
  $("n-shown").textContent = N_SAMPLE;
}

function draw() {
  try {
    report(null);
    drawDensity();
    drawScatter();
  } catch (e) {
    report(e);
  }
}

function tail() {
  try {
    report(null);
    const [, rho, alpha, beta] = model();
    const t = hb_n_tail(alpha, beta, rho);
    const f = (v) => v.toFixed(4);
    $("t-la").textContent = f(t[0]);
    $("t-ua").textContent = f(t[1]);
    $("t-ln").textContent = f(t[2]);
    $("t-un").textContent = f(t[3]);
    $("tail-table").hidden = false;
  } catch (e) {
    report(e);
  }
}

await init();
$("family").addEventListener("change", () => { showParams(); draw(); });
$("draw").addEventListener("click", draw);
$("resample").addEventListener("click", () => { seed += 1; try { drawScatter(); } catch (e) { report(e); } });
$("tail").addEventListener("click", tail);
showParams();
draw();
