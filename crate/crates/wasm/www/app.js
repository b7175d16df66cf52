import init, { neighborhoods, fit_demo, monte_carlo } from "./pkg/nvar_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = (msg) => { $("status").textContent = msg; };

let explorer = null;
let selected = 0;

function settings() {
  return { c: num("case"), p: num("p"), seed: num("seed") };
}

function scaleTo(points, w, h, pad) {
  const xs = points.map((q) => q[0]), ys = points.map((q) => q[1]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const s = Math.min((w - 2 * pad) / (x1 - x0 || 1), (h - 2 * pad) / (y1 - y0 || 1));
  const oy = y1 === y0 ? h / 2 : pad;
  return points.map(([x, y]) => [pad + (x - x0) * s, y1 === y0 ? oy : pad + (y - y0) * s]);
}

function drawLayout() {
  const cv = $("layout"), g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  if (!explorer) return;
  const pts = scaleTo(explorer.positions, cv.width, cv.height, 20);
  explorer.screen = pts;
  const members = new Set(explorer.members[selected]);
  pts.forEach(([x, y], i) => {
    g.beginPath();
    g.arc(x, y, i === selected ? 7 : 5, 0, 2 * Math.PI);
    g.fillStyle = i === selected ? "#c22" : members.has(i) ? "#e98" : "#9ab";
    g.fill();
  });
  const sizes = explorer.members.map((m) => m.length);
  $("explorer-info").textContent =
    `site ${selected}: ${members.size} members at radius ${explorer.radius}. ` +
    `Largest neighborhood ${Math.max(...sizes)}. Candidate radii: ${explorer.candidate_radii.slice(0, 8).map((r) => +r.toFixed(3)).join(", ")}`;
}

function refreshExplorer() {
  const s = settings();
  const r = num("radius");
  $("radius-val").textContent = r;
  try {
    explorer = JSON.parse(neighborhoods(s.c, s.p, r, s.seed));
    if (selected >= s.p) selected = 0;
    status("");
  } catch (e) {
    explorer = null;
    status(e.message || e);
  }
  drawLayout();
}

$("layout").addEventListener("click", (ev) => {
  if (!explorer) return;
  const rect = ev.target.getBoundingClientRect();
  const [mx, my] = [ev.clientX - rect.left, ev.clientY - rect.top];
  let best = 0, bd = Infinity;
  explorer.screen.forEach(([x, y], i) => {
    const d = (x - mx) ** 2 + (y - my) ** 2;
    if (d < bd) { bd = d; best = i; }
  });
  selected = best;
  drawLayout();
});

function heatmap(title, m, vmax) {
  const p = m.length, cell = Math.max(1, Math.floor(240 / p));
  const cv = document.createElement("canvas");
  cv.width = cv.height = cell * p;
  const g = cv.getContext("2d");
  m.forEach((row, i) => row.forEach((v, j) => {
    if (v === 0) return;
    const t = Math.min(1, Math.abs(v) / vmax);
    const c = Math.round(255 * (1 - t));
    g.fillStyle = v > 0 ? `rgb(255,${c},${c})` : `rgb(${c},${c},255)`;
    g.fillRect(j * cell, i * cell, cell, cell);
  }));
  const box = document.createElement("span");
  box.style.display = "inline-block";
  box.append(cv, Object.assign(document.createElement("div"), { className: "cap", textContent: title }));
  return box;
}

function drawBic(fits) {
  const cv = $("bic"), g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const all = fits.flatMap((f) => f.bic_curve);
  if (!all.length) return;
  const [r0, r1] = [Math.min(...all.map((q) => q[0])), Math.max(...all.map((q) => q[0]))];
  const [b0, b1] = [Math.min(...all.map((q) => q[1])), Math.max(...all.map((q) => q[1]))];
  const X = (r) => 40 + (r - r0) / (r1 - r0 || 1) * (cv.width - 60);
  const Y = (b) => cv.height - 30 - (b - b0) / (b1 - b0 || 1) * (cv.height - 50);
  g.strokeStyle = "#888";
  g.strokeRect(40, 20, cv.width - 60, cv.height - 50);
  g.fillStyle = "#444";
  g.fillText("mean BIC by radius", 45, 14);
  ["#c22", "#27a"].forEach((col, k) => {
    const f = fits[k];
    if (!f) return;
    g.strokeStyle = col;
    g.beginPath();
    f.bic_curve.forEach(([r, b], i) => (i ? g.lineTo(X(r), Y(b)) : g.moveTo(X(r), Y(b))));
    g.stroke();
    g.fillStyle = col;
    g.fillText(`${f.name} (picked ${f.radius})`, 50, 34 + 14 * k);
    f.bic_curve.forEach(([r]) => g.fillText(String(+r.toFixed(2)), X(r) - 4, cv.height - 14));
  });
}

function runFit() {
  const s = settings();
  try {
    const out = JSON.parse(fit_demo(s.c, s.p, num("d0"), num("sigma"), num("n"), s.seed));
    const vmax = Math.max(...out.truth.flat().map(Math.abs), 1e-12);
    const box = $("heatmaps");
    box.replaceChildren(heatmap("true A", out.truth, vmax),
      ...out.fits.map((f) => heatmap(`${f.name}: radius ${f.radius}, ‖Â−A‖₂ = ${f.l2.toFixed(3)}`, f.coeffs, vmax)));
    drawBic(out.fits);
    $("fit-info").textContent = `p = ${out.p}, n = ${out.n}, C_n = ${out.c_n.toFixed(3)}`;
    status("");
  } catch (e) {
    status(e.message || e);
  }
}

function runMc() {
  const s = settings();
  $("mc-out").textContent = "running…";
  // let the page repaint before the blocking call
  setTimeout(() => {
    try {
      const rows = JSON.parse(monte_carlo(s.c, s.p, num("d0"), num("sigma"), num("n"), num("reps"), $("lasso").checked, s.seed));
      const radii = rows.find((r) => r.histogram.length)?.histogram.map((h) => h[0]) ?? [];
      const head = `<tr><th>method</th><th>mean ‖Â−A‖₂</th><th>sd</th>${radii.map((r) => `<th>d̂=${r}</th>`).join("")}<th>failed</th></tr>`;
      const body = rows.map((r) => `<tr><td>${r.method}</td><td>${r.l2_mean.toFixed(3)}</td><td>${r.l2_sd == null ? "" : r.l2_sd.toFixed(3)}</td>` +
        radii.map((_, k) => `<td>${r.histogram.length ? r.histogram[k][1] : ""}</td>`).join("") + `<td>${r.failures}</td></tr>`).join("");
      $("mc-out").innerHTML = `<table>${head}${body}</table>`;
      status("");
    } catch (e) {
      $("mc-out").textContent = "";
      status(e.message || e);
    }
  }, 20);
}

await init();
for (const id of ["case", "p", "seed", "radius"]) $(id).addEventListener("input", refreshExplorer);
$("fit").addEventListener("click", runFit);
$("mc").addEventListener("click", runMc);
refreshExplorer();
runFit();
