export type Rgb = [number, number, number];

// compact viridis approximation: evenly spaced anchors, linear interpolation
const VIRIDIS: Rgb[] = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

export function colormap(t: number): Rgb {
  const x = Math.min(1, Math.max(0, t)) * (VIRIDIS.length - 1);
  const i = Math.min(VIRIDIS.length - 2, Math.floor(x));
  const f = x - i;
  const a = VIRIDIS[i];
  const b = VIRIDIS[i + 1];
  return [
    Math.round(a[0] + f * (b[0] - a[0])),
    Math.round(a[1] + f * (b[1] - a[1])),
    Math.round(a[2] + f * (b[2] - a[2])),
  ];
}

export interface Scale {
  vmin: number;
  vmax: number;
  log: boolean;
  normalize(v: number): number;
}

/** Map data values to [0, 1].  Log scaling (used for population errors,
 * which span decades across regimes) falls back to linear when the data
 * touch zero or negative values. */
export function makeScale(values: number[], wantLog: boolean): Scale {
  // spread over Math.min overflows the call stack on large grids
  let vmin = Infinity;
  let vmax = -Infinity;
  for (const v of values) {
    if (v < vmin) vmin = v;
    if (v > vmax) vmax = v;
  }
  const log = wantLog && vmin > 0;
  const span = log ? Math.log(vmax) - Math.log(vmin) : vmax - vmin;
  return {
    vmin,
    vmax,
    log,
    normalize(v: number): number {
      if (span === 0) return 0.5;
      return log ? (Math.log(v) - Math.log(vmin)) / span : (v - vmin) / span;
    },
  };
}

/** Quantize to n filled-contour bands; band centers sample the colormap. */
export function quantize(t: number, bands: number): number {
  const b = Math.min(bands - 1, Math.floor(Math.min(1, Math.max(0, t)) * bands));
  return bands === 1 ? 0.5 : b / (bands - 1);
}
