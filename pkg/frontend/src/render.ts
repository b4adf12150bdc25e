import { existsSync, readFileSync, writeFileSync } from "fs";
import { join } from "path";

import { colormap, makeScale, quantize, Scale } from "./color";
import { numericColumn, readIbflowCsv, requireColumns, SchemaError } from "./csv";
import { encodePng, Raster } from "./png";

export interface RenderResult {
  outPath: string;
  width: number;
  height: number;
  /** colorbar limits; always exactly the extrema of the consumed CSV values */
  vmin: number;
  vmax: number;
  logScale: boolean;
  kind: "heatmap" | "contours";
  inputs: string[];
}

const COLORBAR_W = 18;
const PAD = 10;

function drawColorbar(img: Raster, x0: number, y0: number, h: number): void {
  // top row = vmax, bottom row = vmin
  for (let y = 0; y < h; y++) {
    const t = 1 - y / (h - 1);
    img.fillRect(x0, y0 + y, COLORBAR_W, 1, colormap(t));
  }
  // thin border
  for (let y = -1; y <= h; y++) {
    img.set(x0 - 1, y0 + y, [0, 0, 0]);
    img.set(x0 + COLORBAR_W, y0 + y, [0, 0, 0]);
  }
}

/** Fig-1 style heatmap: scale on the horizontal axis (log-spaced grid,
 * one cell per grid value), shape on the vertical axis (increasing upward),
 * cells colored by population error on a log color scale, averaged over
 * seeds when the sweep carries several. */
export function renderHeatmap(csvPath: string, outPath: string): RenderResult {
  const csv = readIbflowCsv(csvPath);
  const cols = requireColumns(csv, ["alpha", "s", "seed", "pop_error"]);
  const alphas = numericColumn(csv, cols.get("alpha")!);
  const shapes = numericColumn(csv, cols.get("s")!);
  const errors = numericColumn(csv, cols.get("pop_error")!);

  const alphaGrid = [...new Set(alphas)].sort((a, b) => a - b);
  const shapeGrid = [...new Set(shapes)].sort((a, b) => a - b);

  const sums = new Map<string, { total: number; count: number }>();
  for (let i = 0; i < alphas.length; i++) {
    const key = `${alphas[i]}|${shapes[i]}`;
    const cur = sums.get(key) ?? { total: 0, count: 0 };
    cur.total += errors[i];
    cur.count += 1;
    sums.set(key, cur);
  }
  const cell = (a: number, s: number): number => {
    const entry = sums.get(`${a}|${s}`);
    if (!entry) throw new SchemaError(`${csvPath}: grid hole at alpha=${a}, s=${s}`);
    return entry.total / entry.count;
  };

  const scale = makeScale(errors, true);
  const cw = 44;
  const ch = 44;
  const width = PAD + alphaGrid.length * cw + PAD + COLORBAR_W + PAD;
  const height = PAD + shapeGrid.length * ch + PAD;
  const img = new Raster(width, height);

  for (let si = 0; si < shapeGrid.length; si++) {
    for (let ai = 0; ai < alphaGrid.length; ai++) {
      const v = cell(alphaGrid[ai], shapeGrid[si]);
      const y = PAD + (shapeGrid.length - 1 - si) * ch; // shape increases upward
      img.fillRect(PAD + ai * cw, y, cw - 1, ch - 1, colormap(scale.normalize(v)));
    }
  }
  drawColorbar(img, width - PAD - COLORBAR_W, PAD, height - 2 * PAD);

  writeFigure(img, outPath, {
    kind: "heatmap",
    vmin: scale.vmin,
    vmax: scale.vmax,
    logScale: scale.log,
    inputs: [csvPath],
    width,
    height,
    outPath,
  });
  return {
    outPath, width, height, vmin: scale.vmin, vmax: scale.vmax,
    logScale: scale.log, kind: "heatmap", inputs: [csvPath],
  };
}

interface PanelData {
  csvPath: string;
  alpha: number;
  s: number;
  grid: number[]; // shared axis values
  values: number[][]; // [i][j] over (w1, w2)
  wtilde0: [number, number];
}

function loadPanel(csvPath: string, metaPath: string): PanelData {
  const csv = readIbflowCsv(csvPath);
  const cols = requireColumns(csv, ["alpha", "s", "w1", "w2", "q_value"]);
  const w1 = numericColumn(csv, cols.get("w1")!);
  const w2 = numericColumn(csv, cols.get("w2")!);
  const q = numericColumn(csv, cols.get("q_value")!);
  const grid = [...new Set(w1)].sort((a, b) => a - b);
  const n = grid.length;
  if (n * n !== q.length) {
    throw new SchemaError(`${csvPath}: expected a square grid, got ${q.length} rows for ${n} axis values`);
  }
  const index = new Map(grid.map((v, i) => [v, i]));
  const values: number[][] = Array.from({ length: n }, () => new Array(n).fill(NaN));
  for (let r = 0; r < q.length; r++) {
    values[index.get(w1[r])!][index.get(w2[r])!] = q[r];
  }
  let meta: { wtilde0?: number[]; alpha?: number; s?: number } = {};
  if (existsSync(metaPath)) {
    meta = JSON.parse(readFileSync(metaPath, "utf8"));
  }
  const alpha = meta.alpha ?? numericColumn(csv, cols.get("alpha")!)[0];
  const s = meta.s ?? numericColumn(csv, cols.get("s")!)[0];
  const anchor = (meta.wtilde0 as [number, number]) ?? [0.6 * alpha, 0.8 * alpha];
  return { csvPath, alpha, s, grid, values, wtilde0: anchor };
}

/** Resolve contour inputs: a directory containing contour_manifest.json (or
 * contour_panel_*.csv files), or an explicit comma-separated list of CSVs. */
export function resolveContourInputs(input: string): string[] {
  if (input.includes(",")) return input.split(",").map((s) => s.trim());
  const manifest = join(input, "contour_manifest.json");
  if (existsSync(manifest)) {
    const names: string[] = JSON.parse(readFileSync(manifest, "utf8")).panels;
    return names.map((n) => join(input, n));
  }
  if (input.endsWith(".csv")) return [input];
  throw new SchemaError(`${input}: not a contour CSV, list, or directory with contour_manifest.json`);
}

/** Fig-2 style figure: filled-contour panels on a row-of-3 layout, shared
 * color scale across panels whose limits are exactly the CSV extrema, and a
 * red marker at each panel's anchor point. */
export function renderContours(input: string, outPath: string, bands = 12): RenderResult {
  const csvPaths = resolveContourInputs(input);
  const panels = csvPaths.map((p) => loadPanel(p, p.replace(/\.csv$/, ".json")));

  const all: number[] = [];
  for (const p of panels) for (const row of p.values) all.push(...row);
  const scale: Scale = makeScale(all, false);

  const ncols = Math.min(3, panels.length);
  const nrows = Math.ceil(panels.length / ncols);
  const side = panels[0].grid.length;
  const width = PAD + ncols * (side + PAD) + COLORBAR_W + PAD;
  const height = PAD + nrows * (side + PAD);
  const img = new Raster(width, height);

  panels.forEach((panel, idx) => {
    const row = Math.floor(idx / ncols);
    const col = idx % ncols;
    const x0 = PAD + col * (side + PAD);
    const y0 = PAD + row * (side + PAD);
    const n = panel.grid.length;
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) {
        // w1 rightward, w2 upward
        img.set(x0 + i, y0 + (n - 1 - j), colormap(quantize(scale.normalize(panel.values[i][j]), bands)));
      }
    }
    const lo = panel.grid[0];
    const hi = panel.grid[n - 1];
    const px = x0 + Math.round(((panel.wtilde0[0] - lo) / (hi - lo)) * (n - 1));
    const py = y0 + (n - 1 - Math.round(((panel.wtilde0[1] - lo) / (hi - lo)) * (n - 1)));
    img.dot(px, py, 3, [220, 20, 20]);
  });
  drawColorbar(img, width - PAD - COLORBAR_W, PAD, height - 2 * PAD);

  writeFigure(img, outPath, {
    kind: "contours", vmin: scale.vmin, vmax: scale.vmax, logScale: false,
    inputs: csvPaths, width, height, outPath,
  });
  return {
    outPath, width, height, vmin: scale.vmin, vmax: scale.vmax,
    logScale: false, kind: "contours", inputs: csvPaths,
  };
}

function writeFigure(img: Raster, outPath: string, meta: RenderResult): void {
  writeFileSync(outPath, encodePng(img));
  // numeric colorbar limits travel in a sidecar (the renderer draws no text)
  writeFileSync(
    `${outPath}.meta.json`,
    JSON.stringify(
      {
        kind: meta.kind,
        vmin: meta.vmin,
        vmax: meta.vmax,
        log_scale: meta.logScale,
        width: meta.width,
        height: meta.height,
        inputs: meta.inputs,
      },
      null,
      2
    ) + "\n"
  );
}
