import { describe, expect, it } from "vitest";

import { heatmapPixels } from "../src/heatmap.js";

describe("heatmap pixels", () => {
  it("maps probability to brightness with opaque alpha", () => {
    const px = heatmapPixels({ shape: [1, 3], probabilities: [0, 0.5, 1] });
    expect(Array.from(px)).toEqual([
      0, 0, 0, 255,
      128, 128, 128, 255,
      255, 255, 255, 255,
    ]);
  });

  it("clamps out-of-range probabilities", () => {
    const px = heatmapPixels({ shape: [1, 2], probabilities: [-0.2, 1.4] });
    expect(px[0]).toBe(0);
    expect(px[4]).toBe(255);
  });

  it("rejects shape mismatches", () => {
    expect(() => heatmapPixels({ shape: [2, 2], probabilities: [0.1] })).toThrow(/shape/);
  });

  it("keeps row-major order", () => {
    const px = heatmapPixels({ shape: [2, 2], probabilities: [0.1, 0.2, 0.3, 0.4] });
    const grays = [px[0], px[4], px[8], px[12]];
    expect(grays).toEqual([26, 51, 77, 102]);
  });
});
