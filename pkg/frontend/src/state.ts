/** Client-side session timeline, kept as a pure mirror of server history. */

import {
  HeatmapData,
  HistoryResponse,
  InterveneResponse,
  ServiceClient,
} from "./api.js";

export interface TimelineStep {
  step: number;
  action: string; // "encode" for step 0
  imageB64: string; // exactly the bytes the server returned
  changedNodes: number;
  seed: number; // seed used for the intervene call (0 for encode)
  adjacency?: HeatmapData;
}

export type HeatmapLayer = "adjacency" | "mask";

export interface ExplorerSession {
  sessionId: string;
  originalImageB64: string; // the image sent to /encode, retained for replay
  steps: TimelineStep[];
  layer: HeatmapLayer;
}

export function newSession(sessionId: string, sentImageB64: string, reconstructionB64: string): ExplorerSession {
  return {
    sessionId,
    originalImageB64: sentImageB64,
    steps: [{ step: 0, action: "encode", imageB64: reconstructionB64, changedNodes: 0, seed: 0 }],
    layer: "adjacency",
  };
}

export function appendIntervention(
  session: ExplorerSession,
  action: string,
  seed: number,
  res: InterveneResponse,
): ExplorerSession {
  if (res.step !== session.steps.length) {
    throw new Error(
      `server step ${res.step} does not continue local timeline of length ${session.steps.length}`,
    );
  }
  return {
    ...session,
    steps: [
      ...session.steps,
      {
        step: res.step,
        action,
        imageB64: res.image,
        changedNodes: res.changed_nodes,
        seed,
        adjacency: res.adjacency,
      },
    ],
  };
}

/** Rebuild the local timeline from server history (the source of truth). */
export function reconcile(session: ExplorerSession, history: HistoryResponse): ExplorerSession {
  const known = new Map(session.steps.map((s) => [s.step, s]));
  const steps: TimelineStep[] = history.steps.map((h) => ({
    step: h.step,
    action: h.action,
    imageB64: h.image,
    changedNodes: h.changed_nodes,
    seed: known.get(h.step)?.seed ?? 0,
    adjacency: known.get(h.step)?.adjacency,
  }));
  return { ...session, sessionId: history.session, steps };
}

/** True when every local step mirrors the server history exactly. */
export function mirrorsHistory(session: ExplorerSession, history: HistoryResponse): boolean {
  if (session.steps.length !== history.steps.length) return false;
  return session.steps.every((s, i) => {
    const h = history.steps[i];
    return s.step === h.step && s.action === h.action && s.imageB64 === h.image
      && s.changedNodes === h.changed_nodes;
  });
}

/**
 * Undo to a step by replaying server-side: a fresh session is encoded from
 * the retained original image and the kept actions are re-applied with
 * their recorded seeds, so the server reproduces the grid exactly.
 */
export async function undoToStep(
  client: ServiceClient,
  session: ExplorerSession,
  step: number,
): Promise<ExplorerSession> {
  if (step < 0 || step >= session.steps.length) {
    throw new Error(`step ${step} outside timeline 0..${session.steps.length - 1}`);
  }
  const enc = await client.encode(session.originalImageB64);
  let replayed = newSession(enc.session, session.originalImageB64, enc.reconstruction);
  for (const kept of session.steps.slice(1, step + 1)) {
    const res = await client.intervene(enc.session, kept.action, kept.seed);
    replayed = appendIntervention(replayed, kept.action, kept.seed, res);
  }
  return replayed;
}
