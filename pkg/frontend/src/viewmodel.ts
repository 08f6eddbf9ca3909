/** Session view model: mirrors server state, never recomputes doses.
 *
 * Dose strings come straight out of the raw response bytes (rawNumberToken),
 * so what the dashboard prints is exactly what the service sent.
 */

import { GuidanceClient, rawNumberToken } from "./api.js";
import type {
  EpisodeRow,
  HistoryResponse,
  PosteriorView,
  SessionMode,
} from "./types.js";

export interface EpisodeDisplay {
  row: EpisodeRow;
  doseDisplay: string;
}

export class SessionViewModel {
  sessionId = "";
  mode: SessionMode = "live";
  pendingEpisode = false;
  currentDoseDisplay: string | null = null;
  currentFallback = false;
  posterior: PosteriorView | null = null;
  history: HistoryResponse | null = null;
  episodeDoses = new Map<number, string>(); // k -> verbatim dose bytes
  lastError: string | null = null;
  lastMealResponseText = ""; // raw bytes of the latest announcement reply

  constructor(private client: GuidanceClient) {}

  async create(mode: SessionMode, seed?: number): Promise<void> {
    const { body } = await this.client.createSession(mode, seed);
    this.sessionId = body.session_id;
    this.mode = body.mode;
    this.pendingEpisode = false;
    this.currentDoseDisplay = null;
    this.posterior = null;
    this.episodeDoses.clear();
    await this.refresh();
  }

  async announceMeal(
    category: string,
    options: { time_min?: number; cho_grams?: number } = {},
  ): Promise<string> {
    const { body, text } = await this.client.announceMeal(
      this.sessionId,
      category,
      options,
    );
    this.lastMealResponseText = text;
    const doseDisplay = rawNumberToken(text, "dose_u");
    this.currentDoseDisplay = doseDisplay;
    this.currentFallback = body.fallback_used;
    this.posterior = body.posterior;
    this.pendingEpisode = true;
    this.episodeDoses.set(body.episode_k, doseDisplay);
    await this.refreshHistory();
    return doseDisplay;
  }

  async submitCgm(samples: { t_min: number; glucose_mgdl: number }[]): Promise<void> {
    await this.client.submitCgm(this.sessionId, samples);
    await this.refreshHistory();
  }

  async advance(minutes: number): Promise<void> {
    await this.client.advance(this.sessionId, minutes);
    await this.refreshHistory();
  }

  async closeEpisode(now?: number): Promise<void> {
    const { body } = await this.client.closeEpisode(this.sessionId, now);
    this.posterior = body.posterior;
    this.pendingEpisode = false;
    this.currentDoseDisplay = null;
    await this.refreshHistory();
  }

  async refresh(): Promise<void> {
    await this.refreshHistory();
    if (this.history && this.history.episodes.length) {
      const last = this.history.episodes[this.history.episodes.length - 1];
      const { body } = await this.client.posterior(this.sessionId, last.category);
      this.posterior = body;
    }
  }

  private async refreshHistory(): Promise<void> {
    const { body, text } = await this.client.history(this.sessionId);
    this.history = body;
    this.pendingEpisode = body.episodes.some((e) => e.status === "open");
    // Recover verbatim dose bytes for every episode from the raw history
    // payload, so a page reload still displays the server's exact numbers.
    const matches = text.matchAll(/"k"\s*:\s*(\d+)[^{}]*?"dose_u"\s*:\s*(-?[\d.eE+]+)/g);
    for (const m of matches) {
      this.episodeDoses.set(Number(m[1]), m[2]);
    }
  }

  episodes(): EpisodeDisplay[] {
    if (!this.history) return [];
    return this.history.episodes.map((row) => ({
      row,
      doseDisplay: this.episodeDoses.get(row.k) ?? String(row.dose_u),
    }));
  }
}
