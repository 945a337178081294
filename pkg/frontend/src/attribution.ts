/** View model for the attribution panel: the full distribution, no winner
 * is asserted when mass is spread. */

import { AttributeResponse } from "./api.js";

export interface AttributionBar {
  action: string;
  probability: number;
  /** bar width as a fraction of the largest probability */
  relative: number;
}

export interface AttributionView {
  bars: AttributionBar[];
  qSum: number;
  chosen: string;
  /** true when one action clearly dominates (>= 2x the runner-up) */
  dominant: boolean;
}

export function attributionView(res: AttributeResponse): AttributionView {
  const entries = Object.entries(res.q).sort((a, b) => b[1] - a[1]);
  if (entries.length === 0) {
    throw new Error("attribution response holds no actions");
  }
  const top = entries[0][1];
  const runnerUp = entries.length > 1 ? entries[1][1] : 0;
  const bars = entries.map(([action, probability]) => ({
    action,
    probability,
    relative: top > 0 ? probability / top : 0,
  }));
  const qSum = entries.reduce((acc, [, p]) => acc + p, 0);
  return {
    bars,
    qSum,
    chosen: res.chosen,
    dominant: runnerUp === 0 || top >= 2 * runnerUp,
  };
}

export function formatProbability(p: number): string {
  return `${(100 * p).toFixed(1)}%`;
}
