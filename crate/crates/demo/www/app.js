import init, { WasmDemo } from "./pkg/altruroute_demo.js";

const $ = (id) => document.getElementById(id);
const ROUTE_COLORS = ["#d62728", "#1f77b4", "#2ca02c"];

let demo = null;
let edges = [];
let lastRun = null;

function status(text) {
  $("status").textContent = text;
}

// Runs a long wasm call after the status line has been painted.
function busy(text, f) {
  status(text);
  setTimeout(() => {
    try {
      f();
    } catch (e) {
      status("error: " + e);
    }
  }, 20);
}

function project() {
  const xs = edges.flatMap((e) => [e.x1, e.x2]);
  const ys = edges.flatMap((e) => [e.y1, e.y2]);
  const minX = Math.min(...xs), maxX = Math.max(...xs);
  const minY = Math.min(...ys), maxY = Math.max(...ys);
  const c = $("map");
  const pad = 24;
  const s = Math.min((c.width - 2 * pad) / (maxX - minX || 1), (c.height - 2 * pad) / (maxY - minY || 1));
  return (x, y) => [pad + (x - minX) * s, c.height - pad - (y - minY) * s];
}

// Offsets a segment sideways so both directions of a street are visible.
function offsetSegment(p, q, d) {
  const dx = q[0] - p[0], dy = q[1] - p[1];
  const len = Math.hypot(dx, dy) || 1;
  const ox = (-dy / len) * d, oy = (dx / len) * d;
  return [[p[0] + ox, p[1] + oy], [q[0] + ox, q[1] + oy]];
}

function heat(v) {
  const t = Math.max(0, Math.min(1, v));
  const r = Math.round(255 * Math.min(1, 2 * t));
  const g = Math.round(200 * Math.min(1, 2 * (1 - t)));
  return `rgb(${r},${g},60)`;
}

function drawMap(values, routes) {
  const c = $("map");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const P = project();
  const max = values ? Math.max(...values, 1e-12) : 1;
  edges.forEach((e, i) => {
    const [p, q] = offsetSegment(P(e.x1, e.y1), P(e.x2, e.y2), 2.5);
    ctx.strokeStyle = values ? heat(values[i] / max) : "#999";
    ctx.lineWidth = e.lanes > 1 ? 3 : 1.5;
    ctx.beginPath();
    ctx.moveTo(...p);
    ctx.lineTo(...q);
    ctx.stroke();
  });
  (routes || []).forEach((r, k) => {
    ctx.strokeStyle = ROUTE_COLORS[k];
    ctx.lineWidth = 4;
    ctx.globalAlpha = 0.75;
    ctx.beginPath();
    r.edges.forEach((i, j) => {
      const e = edges[i];
      const [p, q] = offsetSegment(P(e.x1, e.y1), P(e.x2, e.y2), 3 + 3 * k);
      if (j === 0) ctx.moveTo(...p);
      ctx.lineTo(...q);
    });
    ctx.stroke();
    ctx.globalAlpha = 1;
  });
}

function fmt(v, digits = 4) {
  if (v === null || v === undefined) return "n/a";
  return Math.abs(v) < 1e-3 && v !== 0 ? v.toExponential(3) : v.toFixed(digits);
}

function showMetrics(rows) {
  $("metrics").innerHTML = rows.map(([k, v]) => `<tr><th>${k}</th><td>${v}</td></tr>`).join("");
}

function drawCurve(points) {
  const c = $("chart");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const pad = 30;
  const series = [
    ["local cost", "#d62728", points.map((p) => p.local_cost)],
    ["global cost", "#1f77b4", points.map((p) => p.global_cost)],
    ["trip overhead", "#2ca02c", points.map((p) => p.mean_overhead ?? NaN)],
  ];
  const X = (b) => pad + b * (c.width - 2 * pad);
  ctx.strokeStyle = "#aaa";
  ctx.strokeRect(pad, pad / 2, c.width - 2 * pad, c.height - 1.5 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText("β = 0", X(0) - 10, c.height - 8);
  ctx.fillText("β = 1", X(1) - 10, c.height - 8);
  // Each series is scaled to its own range, as in the normalized plots.
  for (const [, color, ys] of series) {
    const finite = ys.filter(Number.isFinite);
    const lo = Math.min(...finite), hi = Math.max(...finite);
    const Y = (v) => c.height - pad - ((v - lo) / (hi - lo || 1)) * (c.height - 2 * pad);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    points.forEach((p, i) => {
      if (!Number.isFinite(ys[i])) return;
      i === 0 ? ctx.moveTo(X(p.beta), Y(ys[i])) : ctx.lineTo(X(p.beta), Y(ys[i]));
    });
    ctx.stroke();
  }
  $("legend").innerHTML = series
    .map(([name, color]) => `<span class="swatch" style="background:${color}"></span> ${name}`)
    .join(" &nbsp; ");
}

function redrawRun() {
  if (!lastRun) return;
  drawMap($("showload").checked ? lastRun.load : lastRun.utilization);
}

function build() {
  const params = {
    size: Number($("size").value),
    vehicles: Number($("vehicles").value),
    horizon_ticks: Number($("ticks").value),
    seed: Number($("seed").value),
  };
  busy("mining router costs from baseline runs…", () => {
    demo?.free();
    demo = new WasmDemo(JSON.stringify(params));
    edges = JSON.parse(demo.edges());
    lastRun = null;
    drawMap(null);
    showMetrics([["streets", edges.length]]);
    status("ready");
  });
}

$("beta").addEventListener("input", () => {
  $("betaval").textContent = Number($("beta").value).toFixed(1);
});
$("showload").addEventListener("change", redrawRun);
$("build").addEventListener("click", build);

$("run").addEventListener("click", () =>
  busy("optimizing and simulating…", () => {
    const beta = Number($("beta").value);
    lastRun = JSON.parse(demo.run(beta, 0));
    redrawRun();
    const [ml, ms, bal] = lastRun.router_distribution.map((f) => (100 * f).toFixed(0) + "%");
    showMetrics([
      ["β", beta.toFixed(1)],
      ["local cost", fmt(lastRun.local_cost)],
      ["global cost", fmt(lastRun.global_cost)],
      ["mean trip overhead", fmt(lastRun.mean_overhead)],
      ["shortest / fastest / balanced", `${ml} / ${ms} / ${bal}`],
      ["iterations", lastRun.iterations],
    ]);
    status("done");
  })
);

$("curve").addEventListener("click", () =>
  busy("running 11 β values…", () => {
    drawCurve(JSON.parse(demo.betaCurve(0)));
    status("done");
  })
);

let routeSeed = 0;
$("routes").addEventListener("click", () =>
  busy("routing…", () => {
    const routes = JSON.parse(demo.routes(BigInt(routeSeed++)));
    drawMap(null, routes);
    showMetrics(
      routes.map((r, k) => [
        `<span class="swatch" style="background:${ROUTE_COLORS[k]}"></span> ${r.router}`,
        `${r.length_m.toFixed(0)} m, ${r.free_flow_s.toFixed(0)} s`,
      ])
    );
    status("done");
  })
);

await init();
build();
