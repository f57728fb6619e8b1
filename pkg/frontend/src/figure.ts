import { EnergiesData, downsample } from './csv.js';

export interface PanelSpec {
  data: EnergiesData;
  /** constant subtracted from the H_osc series (default 0) */
  shift: number;
  /** series labels to draw; default: all E_j plus H_osc */
  series?: string[];
  yRange?: [number, number];
  title?: string;
}

export interface FigureOptions {
  width: number;
  height: number; // per panel
  maxPoints: number;
}

export const DEFAULTS: FigureOptions = { width: 760, height: 300, maxPoints: 5000 };

const PALETTE = [
  '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd',
  '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf',
];

interface Series {
  label: string;
  color: string;
  t: number[];
  values: number[];
}

export interface PanelLayout {
  series: Series[];
  xDomain: [number, number];
  yDomain: [number, number];
  title?: string;
}

/** Tick positions at a 1/2/5 step covering [lo, hi]. */
export function niceTicks(lo: number, hi: number, target = 6): number[] {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.5 : 0.5;
    return niceTicks(lo - pad, hi + pad, target);
  }
  const raw = (hi - lo) / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  const step = (norm < 1.5 ? 1 : norm < 3.5 ? 2 : norm < 7.5 ? 5 : 10) * mag;
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

function fmt(v: number): string {
  if (v === 0) return '0';
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(1);
  return String(Number(v.toPrecision(6)));
}

/** Resolve a panel's series and axis domains (pure; used by tests). */
export function layoutPanel(spec: PanelSpec, maxPoints = DEFAULTS.maxPoints): PanelLayout {
  const { data } = spec;
  const wanted = spec.series ??
    [...data.modes.map((m) => m.label), 'H_osc'];
  const series: Series[] = [];
  let ci = 0;
  for (const label of wanted) {
    let values: number[];
    if (label === 'H_osc') {
      values = data.hOsc.map((v) => v - spec.shift);
    } else {
      const mode = data.modes.find((m) => m.label === label);
      if (!mode) {
        throw new Error(`series ${label} not present in the CSV`);
      }
      values = mode.values;
    }
    series.push({
      label: label === 'H_osc' && spec.shift !== 0
        ? `H_osc - ${spec.shift}` : label,
      color: PALETTE[ci++ % PALETTE.length],
      t: downsample(data.t, maxPoints),
      values: downsample(values, maxPoints),
    });
  }
  const xDomain: [number, number] = [data.t[0], data.t[data.t.length - 1]];
  let yDomain: [number, number];
  if (spec.yRange) {
    yDomain = spec.yRange;
  } else {
    let lo = Infinity;
    let hi = -Infinity;
    for (const s of series) {
      for (const v of s.values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
    }
    const pad = (hi - lo || 1) * 0.05;
    yDomain = [lo - pad, hi + pad];
  }
  return { series, xDomain, yDomain, title: spec.title };
}

function panelSvg(layout: PanelLayout, opts: FigureOptions, yOffset: number): string {
  const mL = 62;
  const mR = 120;
  const mT = 24;
  const mB = 34;
  const W = opts.width - mL - mR;
  const H = opts.height - mT - mB;
  const [x0, x1] = layout.xDomain;
  const [y0, y1] = layout.yDomain;
  const sx = (v: number) => mL + ((v - x0) / (x1 - x0 || 1)) * W;
  const sy = (v: number) => mT + H - ((v - y0) / (y1 - y0 || 1)) * H;
  const parts: string[] = [];
  parts.push(`<g transform="translate(0,${yOffset})">`);
  parts.push(`<rect x="${mL}" y="${mT}" width="${W}" height="${H}" fill="none" stroke="#333"/>`);
  for (const tx of niceTicks(x0, x1)) {
    const px = sx(tx).toFixed(2);
    parts.push(`<line x1="${px}" y1="${mT + H}" x2="${px}" y2="${mT + H + 5}" stroke="#333"/>`);
    parts.push(`<text x="${px}" y="${mT + H + 18}" font-size="11" text-anchor="middle">${fmt(tx)}</text>`);
  }
  for (const ty of niceTicks(y0, y1)) {
    if (ty < y0 || ty > y1) continue;
    const py = sy(ty).toFixed(2);
    parts.push(`<line x1="${mL - 5}" y1="${py}" x2="${mL}" y2="${py}" stroke="#333"/>`);
    parts.push(`<text x="${mL - 8}" y="${py}" font-size="11" text-anchor="end" dominant-baseline="middle">${fmt(ty)}</text>`);
  }
  for (const s of layout.series) {
    const pts = s.t.map((tv, i) => `${sx(tv).toFixed(2)},${sy(s.values[i]).toFixed(2)}`);
    if (pts.length === 1) {
      const [x, y] = pts[0].split(',');
      parts.push(`<circle cx="${x}" cy="${y}" r="2.5" fill="${s.color}"/>`);
    } else {
      parts.push(`<polyline points="${pts.join(' ')}" fill="none" stroke="${s.color}" stroke-width="1"/>`);
    }
  }
  layout.series.forEach((s, i) => {
    const ly = mT + 14 * i;
    parts.push(`<line x1="${mL + W + 8}" y1="${ly}" x2="${mL + W + 26}" y2="${ly}" stroke="${s.color}" stroke-width="2"/>`);
    parts.push(`<text x="${mL + W + 30}" y="${ly + 4}" font-size="11">${s.label}</text>`);
  });
  if (layout.title) {
    parts.push(`<text x="${mL}" y="${mT - 8}" font-size="12" font-weight="bold">${layout.title}</text>`);
  }
  parts.push(`<text x="${mL + W / 2}" y="${mT + H + 31}" font-size="11" text-anchor="middle">t</text>`);
  parts.push('</g>');
  return parts.join('\n');
}

/** Render one image with the panels stacked vertically. */
export function renderFigure(panels: PanelSpec[], opts: Partial<FigureOptions> = {}): string {
  if (panels.length === 0) {
    throw new Error('no panels to render');
  }
  const o = { ...DEFAULTS, ...opts };
  const layouts = panels.map((p) => layoutPanel(p, o.maxPoints));
  const totalH = o.height * panels.length;
  const body = layouts.map((l, i) => panelSvg(l, o, i * o.height)).join('\n');
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${o.width} ${totalH}" width="${o.width}" height="${totalH}">`,
    '<rect width="100%" height="100%" fill="white"/>',
    body,
    '</svg>',
    '',
  ].join('\n');
}
