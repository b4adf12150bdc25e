export { CSV_HEADER, readIbflowCsv, requireColumns, SchemaError } from "./csv";
export { colormap, makeScale, quantize } from "./color";
export { decodePng, encodePng, Raster } from "./png";
export {
  renderContours,
  renderHeatmap,
  resolveContourInputs,
  RenderResult,
} from "./render";
