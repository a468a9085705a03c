import init, { classify_point, analyze_table, boschloo_curve } from "./pkg/ivcheck_wasm.js";

const $ = (id) => document.getElementById(id);

// ---------------------------------------------------------------- geometry

const MEMBERSHIP_COLOR = {
  interior: "#a5d6a7",
  boundary: "#ffe082",
  exterior: "#ef9a9a",
};

function classify(u00, u01, u10) {
  // Invalid coordinates (outside the probability simplex) throw.
  try {
    return JSON.parse(classify_point(u00, u01, u10));
  } catch {
    return null;
  }
}

function drawGeometry() {
  const u00 = Number($("g-u00").value);
  const u01 = Number($("g-u01").value);
  const u10 = Number($("g-u10").value);
  $("g-u00-val").textContent = u00.toFixed(2);
  $("g-u01-val").textContent = u01.toFixed(2);
  $("g-u10-val").textContent = u10.toFixed(2);

  const canvas = $("g-canvas");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);

  // Cross-section over (u00, u01) in [0, 1.2]^2 at the chosen u10.
  const MAX = 1.2, CELLS = 60, step = MAX / CELLS;
  for (let i = 0; i < CELLS; i++) {
    for (let j = 0; j < CELLS; j++) {
      const p = classify((i + 0.5) * step, (j + 0.5) * step, u10);
      if (!p) continue;
      ctx.fillStyle = MEMBERSHIP_COLOR[p.membership] ?? "#eee";
      ctx.fillRect(
        (i / CELLS) * w,
        h - ((j + 1) / CELLS) * h,
        w / CELLS + 1,
        h / CELLS + 1,
      );
    }
  }

  // Axes at u = 1, the active-constraint lines.
  ctx.strokeStyle = "#90a4ae";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo((1 / MAX) * w, 0); ctx.lineTo((1 / MAX) * w, h);
  ctx.moveTo(0, h - (1 / MAX) * h); ctx.lineTo(w, h - (1 / MAX) * h);
  ctx.stroke();
  ctx.setLineDash([]);

  // Current point.
  const report = classify(u00, u01, u10);
  ctx.fillStyle = "#1c2430";
  ctx.beginPath();
  ctx.arc((u00 / MAX) * w, h - (u01 / MAX) * h, 5, 0, 2 * Math.PI);
  ctx.fill();

  if (report) {
    $("g-u11").textContent = report.u11.toFixed(3);
    $("g-membership").innerHTML =
      `<span class="badge ${report.membership}">${report.membership}</span>`;
    $("g-error").textContent = "";
  } else {
    $("g-u11").textContent = "-";
    $("g-membership").textContent = "";
    $("g-error").textContent =
      "not a distribution: the four coordinates must be non-negative and sum to 2";
  }
}

for (const id of ["g-u00", "g-u01", "g-u10"]) {
  $(id).addEventListener("input", drawGeometry);
}

// ------------------------------------------------------------- table test

function runTable() {
  // analyze_table expects counts ordered (z=0 block, then z=1), each block
  // (d=0,y=0), (d=0,y=1), (d=1,y=0), (d=1,y=1).
  const cells = ["c000", "c001", "c010", "c011", "c100", "c101", "c110", "c111"]
    .map((id) => Number($(id).value) | 0);
  const alpha = Number($("t-alpha").value);
  const method = $("t-method").value;
  const gamma = method === "berger_boos" ? Number($("t-gamma").value) : undefined;
  let out;
  try {
    out = JSON.parse(analyze_table(new Uint32Array(cells), alpha, method, gamma));
    $("t-error").textContent = "";
  } catch (e) {
    $("t-result").innerHTML = "";
    $("t-error").textContent = String(e.message ?? e);
    return;
  }

  const { zeta, report } = out;
  const fmt = (x) => (x === null || x === undefined ? "-" : x.toFixed(3));
  let html = `<table class="report">
    <tr><th>inequality</th><th>statistic</th><th>p-value</th><th>level</th><th></th></tr>`;
  for (const e of report.entries) {
    const badge = e.reject
      ? `<span class="badge reject">reject</span>`
      : `<span class="badge ok">keep</span>`;
    html += `<tr><td>u<sup>${e.id.d}${e.id.y}</sup> &le; 1</td>
      <td>${fmt(e.statistic)}</td><td>${fmt(e.p_value)}</td>
      <td>${e.level.toFixed(4)}</td><td>${badge}</td></tr>`;
  }
  html += `</table>`;
  html += `<div class="verdict">${
    report.falsified
      ? "The instrumental variable model is falsified."
      : "The data are compatible with an instrumental variable model."
  }</div>`;
  html += `<div class="note">Empirical coordinates: u&#8304;&#8304;=${zeta.u00.toFixed(3)},
    u&#8304;&sup1;=${zeta.u01.toFixed(3)}, u&sup1;&#8304;=${zeta.u10.toFixed(3)},
    u&sup1;&sup1;=${zeta.u11.toFixed(3)} (${zeta.membership})</div>`;
  for (const a of report.acde ?? []) {
    const dir = a.positive ? "positive" : a.negative ? "negative" : "undetermined";
    html += `<div class="note">Direct effect of Z on Y when D is held at ${a.d}: ${dir}`;
    if (a.bounds) {
      html += `, plug-in bounds [${a.bounds.lower.toFixed(3)}, ${a.bounds.upper.toFixed(3)}]`;
    }
    html += `</div>`;
  }
  for (const wmsg of report.warnings ?? []) {
    html += `<div class="note">Warning: ${wmsg}</div>`;
  }
  $("t-result").innerHTML = html;
}

$("t-method").addEventListener("change", () => {
  $("t-gamma-row").hidden = $("t-method").value !== "berger_boos";
});
$("t-run").addEventListener("click", runTable);

// ------------------------------------------------------------ exact curve

function drawCurve() {
  let out;
  try {
    out = JSON.parse(boschloo_curve(
      Number($("b-x1").value) | 0,
      Number($("b-n1").value) | 0,
      Number($("b-x0").value) | 0,
      Number($("b-n0").value) | 0,
      400,
    ));
    $("b-error").textContent = "";
  } catch (e) {
    $("b-error").textContent = String(e.message ?? e);
    return;
  }
  $("b-fisher").textContent = out.fisher_p.toFixed(4);
  $("b-exact").textContent = out.test_p.toFixed(4);

  const canvas = $("b-canvas");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  const pad = { l: 44, r: 10, t: 10, b: 28 };
  ctx.clearRect(0, 0, w, h);

  const ymax = Math.max(out.fisher_p, out.test_p, ...out.curve.map((p) => p[1])) * 1.1 || 1;
  const sx = (pi) => pad.l + pi * (w - pad.l - pad.r);
  const sy = (v) => h - pad.b - (v / ymax) * (h - pad.t - pad.b);

  // Frame and ticks.
  ctx.strokeStyle = "#90a4ae";
  ctx.fillStyle = "#5b6b7d";
  ctx.font = "11px system-ui";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  for (const pi of [0, 0.5, 1]) {
    ctx.fillText(pi.toFixed(1), sx(pi) - 8, h - pad.b + 16);
  }
  for (const v of [0, ymax / 2, ymax]) {
    ctx.fillText(v.toFixed(3), 4, sy(v) + 4);
  }
  ctx.fillText("common success rate π", w / 2 - 50, h - 4);

  // Reference lines: the exact p-value (the supremum) and Fisher's.
  ctx.strokeStyle = "#c62828";
  ctx.beginPath();
  ctx.moveTo(pad.l, sy(out.test_p)); ctx.lineTo(w - pad.r, sy(out.test_p));
  ctx.stroke();
  ctx.strokeStyle = "#2456a6";
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  ctx.moveTo(pad.l, sy(out.fisher_p)); ctx.lineTo(w - pad.r, sy(out.fisher_p));
  ctx.stroke();
  ctx.setLineDash([]);

  // The tail curve itself.
  ctx.strokeStyle = "#1c2430";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  out.curve.forEach(([pi, v], i) => {
    if (i === 0) ctx.moveTo(sx(pi), sy(v));
    else ctx.lineTo(sx(pi), sy(v));
  });
  ctx.stroke();
  ctx.lineWidth = 1;
}

$("b-run").addEventListener("click", drawCurve);

// ------------------------------------------------------------------ boot

await init();
drawGeometry();
runTable();
drawCurve();
