import { describe, expect, it } from "vitest";

import { AttributeResponse } from "../src/api.js";
import { attributionView, formatProbability } from "../src/attribution.js";

const response = (q: Record<string, number>, chosen: string): AttributeResponse => ({
  schema_version: "1",
  q,
  scores: Object.fromEntries(Object.keys(q).map((k) => [k, Math.log(q[k] + 1e-12)])),
  chosen,
});

describe("attribution panel model", () => {
  it("displays the q distribution summing to one", () => {
    const view = attributionView(response(
      { "pos_x:+": 0.5, "pos_x:-": 0.25, "pos_y:+": 0.125, "pos_y:-": 0.125 },
      "pos_x:+",
    ));
    expect(view.qSum).toBeCloseTo(1.0, 6);
    expect(view.bars.map((b) => b.action)).toEqual(["pos_x:+", "pos_x:-", "pos_y:+", "pos_y:-"]);
    expect(view.bars[0].relative).toBe(1);
    expect(view.bars[1].relative).toBeCloseTo(0.5, 9);
  });

  it("marks a clear winner as dominant", () => {
    const view = attributionView(response({ a: 0.8, b: 0.2 }, "a"));
    expect(view.dominant).toBe(true);
    expect(view.chosen).toBe("a");
  });

  it("does not assert a winner after an action and its inverse", () => {
    // q spread out: the view keeps the full distribution, dominant = false
    const view = attributionView(response(
      { "pos_x:+": 0.3, "pos_x:-": 0.28, "shape:+": 0.22, "shape:-": 0.2 },
      "pos_x:+",
    ));
    expect(view.dominant).toBe(false);
    expect(view.bars).toHaveLength(4);
    expect(view.qSum).toBeCloseTo(1.0, 6);
  });

  it("rejects an empty distribution", () => {
    expect(() => attributionView(response({}, "x"))).toThrow();
  });

  it("formats probabilities as percentages", () => {
    expect(formatProbability(0.1234)).toBe("12.3%");
    expect(formatProbability(1)).toBe("100.0%");
  });
});
