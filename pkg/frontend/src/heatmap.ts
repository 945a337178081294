/** Grayscale rendering of probability matrices: brightness tracks probability. */

import { HeatmapData } from "./api.js";

/** RGBA pixel buffer (row-major) for a probability matrix in [0, 1]. */
export function heatmapPixels(data: HeatmapData): Uint8ClampedArray {
  const [rows, cols] = data.shape;
  if (rows * cols !== data.probabilities.length) {
    throw new Error(
      `shape ${rows}x${cols} does not match ${data.probabilities.length} probabilities`,
    );
  }
  const out = new Uint8ClampedArray(rows * cols * 4);
  for (let i = 0; i < data.probabilities.length; i++) {
    const p = Math.min(1, Math.max(0, data.probabilities[i]));
    const v = Math.round(p * 255);
    out[4 * i] = v;
    out[4 * i + 1] = v;
    out[4 * i + 2] = v;
    out[4 * i + 3] = 255;
  }
  return out;
}

export function drawHeatmap(canvas: HTMLCanvasElement, data: HeatmapData, scale = 12): void {
  const [rows, cols] = data.shape;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const pixels = heatmapPixels(data);
  const image = new ImageData(
    new Uint8ClampedArray(pixels.buffer as ArrayBuffer), cols, rows,
  );
  const off = document.createElement("canvas");
  off.width = cols;
  off.height = rows;
  off.getContext("2d")!.putImageData(image, 0, 0);
  canvas.width = cols * scale;
  canvas.height = rows * scale;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}
