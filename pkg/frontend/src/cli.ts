#!/usr/bin/env node
/** ibplot --kind heatmap|contours --in <csv|dir|list> --out fig.png */

import { renderContours, renderHeatmap } from "./render";
import { SchemaError } from "./csv";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (argv[i].startsWith("--")) {
      args.set(argv[i].slice(2), argv[i + 1] ?? "");
      i++;
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  const kind = args.get("kind");
  const input = args.get("in");
  const out = args.get("out");
  if (!kind || !input || !out || (kind !== "heatmap" && kind !== "contours")) {
    console.error("usage: ibplot --kind heatmap|contours --in <csv|dir> --out fig.png");
    return 2;
  }
  try {
    const result =
      kind === "heatmap" ? renderHeatmap(input, out) : renderContours(input, out);
    console.log(
      `${result.kind}: ${result.inputs.length} input(s) -> ${result.outPath} ` +
        `(${result.width}x${result.height}, color range [${result.vmin}, ${result.vmax}]` +
        `${result.logScale ? ", log scale" : ""})`
    );
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 3;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
