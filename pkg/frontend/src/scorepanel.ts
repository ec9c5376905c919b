/** Live decision-support panel: re-scores the patch whenever the
 * confidence slider moves and renders the result as a display string. */

import { ApiError, type ApiClient } from "./api.js";
import type { ScoreJson } from "./types.js";

export interface ScorePanelState {
  tau: number;
  score: ScoreJson | null;
  notice: string | null; // e.g. "no cells" for an empty patch
}

export function formatScore(score: ScoreJson): string {
  if (score.stain_kind === "membrane") {
    const flag = score.boundary_flag ? " (near 10% boundary)" : "";
    return `HER2 ${score.score}, ${score.assessment}${flag}`;
  }
  return `${score.percent_positive.toFixed(1)}% positive (${score.positive_count}/${score.total} cells)`;
}

export class ScorePanel {
  private readonly api: ApiClient;
  private readonly key: string;
  readonly state: ScorePanelState = { tau: 0, score: null, notice: null };
  onChange: ((state: ScorePanelState) => void) | null = null;

  constructor(api: ApiClient, patchKey: string, initialTau = 0) {
    this.api = api;
    this.key = patchKey;
    this.state.tau = initialTau;
  }

  async setTau(tau: number): Promise<ScorePanelState> {
    this.state.tau = tau;
    try {
      this.state.score = await this.api.score(this.key, tau);
      this.state.notice = null;
    } catch (err) {
      if (err instanceof ApiError && err.code === "empty_dataset") {
        this.state.score = null;
        this.state.notice = "no cells";
      } else {
        throw err;
      }
    }
    this.onChange?.(this.state);
    return this.state;
  }

  get display(): string {
    if (this.state.notice) return this.state.notice;
    return this.state.score ? formatScore(this.state.score) : "";
  }
}
