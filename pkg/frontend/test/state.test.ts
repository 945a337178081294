import { describe, expect, it, vi } from "vitest";

import {
  EncodeResponse,
  HistoryResponse,
  InterveneResponse,
  ServiceClient,
} from "../src/api.js";
import {
  appendIntervention,
  mirrorsHistory,
  newSession,
  reconcile,
  undoToStep,
} from "../src/state.js";

const intervene = (step: number, image: string, changed = 2): InterveneResponse => ({
  schema_version: "1",
  step,
  image,
  changed_nodes: changed,
  adjacency: { shape: [2, 2], probabilities: [0.9, 0.1, 0.2, 0.8] },
});

describe("timeline state", () => {
  it("starts with the encode step and appends interventions", () => {
    let s = newSession("abc", "orig-bytes", "recon-bytes");
    expect(s.steps).toHaveLength(1);
    expect(s.steps[0].imageB64).toBe("recon-bytes");

    s = appendIntervention(s, "pos_x:+", 7, intervene(1, "img-1"));
    expect(s.steps).toHaveLength(2);
    expect(s.steps[1].action).toBe("pos_x:+");
    expect(s.steps[1].seed).toBe(7);
    // the rendered bytes are exactly the bytes the server returned
    expect(s.steps[1].imageB64).toBe("img-1");
  });

  it("rejects out-of-order server steps", () => {
    const s = newSession("abc", "orig", "recon");
    expect(() => appendIntervention(s, "pos_x:+", 0, intervene(5, "img"))).toThrow(/step 5/);
  });

  it("reconciles to mirror server history exactly", () => {
    let s = newSession("abc", "orig", "recon");
    s = appendIntervention(s, "pos_x:+", 1, intervene(1, "img-1"));
    const history: HistoryResponse = {
      schema_version: "1",
      session: "abc",
      steps: [
        { step: 0, action: "encode", image: "recon", changed_nodes: 0 },
        { step: 1, action: "pos_x:+", image: "img-1", changed_nodes: 2 },
        { step: 2, action: "pos_y:-", image: "img-2", changed_nodes: 3 },
      ],
    };
    expect(mirrorsHistory(s, history)).toBe(false); // local is behind
    const synced = reconcile(s, history);
    expect(synced.steps).toHaveLength(3);
    expect(mirrorsHistory(synced, history)).toBe(true);
    expect(synced.steps[2].imageB64).toBe("img-2");
    // seeds survive reconciliation for replay
    expect(synced.steps[1].seed).toBe(1);
  });

  it("rebuilds the full timeline from history after a reload", () => {
    const history: HistoryResponse = {
      schema_version: "1",
      session: "abc",
      steps: [
        { step: 0, action: "encode", image: "recon", changed_nodes: 0 },
        { step: 1, action: "shape:+", image: "img-1", changed_nodes: 4 },
      ],
    };
    const fresh = reconcile(newSession("abc", "orig", ""), history);
    expect(fresh.steps.map((s) => s.imageB64)).toEqual(["recon", "img-1"]);
    expect(mirrorsHistory(fresh, history)).toBe(true);
  });

  it("undo replays server-side from the retained original with recorded seeds", async () => {
    let s = newSession("old", "orig-bytes", "recon");
    s = appendIntervention(s, "pos_x:+", 11, intervene(1, "img-1"));
    s = appendIntervention(s, "pos_y:-", 22, intervene(2, "img-2"));
    s = appendIntervention(s, "shape:+", 33, intervene(3, "img-3"));

    const encode = vi.fn(async (image: string): Promise<EncodeResponse> => {
      expect(image).toBe("orig-bytes");
      return {
        schema_version: "1",
        session: "fresh",
        code: { grid: [2, 2, 1], indices: [0, 1, 2, 3] },
        reconstruction: "recon",
      };
    });
    const calls: Array<[string, string, number]> = [];
    const interveneFn = vi.fn(async (sid: string, action: string, seed = 0) => {
      calls.push([sid, action, seed]);
      return intervene(calls.length, `replay-${calls.length}`);
    });
    const client = { encode, intervene: interveneFn } as unknown as ServiceClient;

    const undone = await undoToStep(client, s, 2);
    expect(encode).toHaveBeenCalledTimes(1);
    expect(calls).toEqual([
      ["fresh", "pos_x:+", 11],
      ["fresh", "pos_y:-", 22],
    ]);
    expect(undone.sessionId).toBe("fresh");
    expect(undone.steps).toHaveLength(3);
  });

  it("undo rejects steps outside the timeline", async () => {
    const s = newSession("abc", "orig", "recon");
    const client = {} as ServiceClient;
    await expect(undoToStep(client, s, 3)).rejects.toThrow(/outside timeline/);
  });
});
