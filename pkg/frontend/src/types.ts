/** Payload shapes of the guidance service (see docs/http_api.md). */

export type SessionMode = "live" | "simulated";

export interface SessionCreated {
  session_id: string;
  mode: SessionMode;
  created_at: string;
  episodes: number;
}

export interface PosteriorView {
  category: string;
  doses: number[];
  reward_mean: number[];
  reward_std: number[];
  constraint_lcb: number[];
  safe: boolean[];
  acquisition: (number | null)[];
  fallback: boolean;
  beta_sqrt: number;
  safety_margin: number;
}

export interface MealResponse {
  dose_u: number;
  fallback_used: boolean;
  episode_k: number;
  meal_time: number;
  posterior: PosteriorView;
}

export interface CloseResponse {
  reward_obs: number;
  constraint_obs: number;
  iteration: number;
  posterior: PosteriorView;
}

export interface AdvanceResponse {
  minutes_advanced: number;
  time_min: number;
  glucose_mgdl: number;
  samples: { t_min: number; glucose_mgdl: number }[];
}

export interface EpisodeRow {
  k: number;
  category: string;
  meal_time: number;
  cho_grams: number;
  dose_u: number;
  fallback_used: boolean;
  window_start: number;
  window_end: number;
  samples: number;
  reward_obs: number | null;
  constraint_obs: number | null;
  status: "open" | "closed" | "discarded";
}

export interface HistoryResponse {
  session_id: string;
  mode: SessionMode;
  episodes: EpisodeRow[];
  cgm: { t_min: number[]; glucose_mgdl: number[] };
  bg?: { t_min: number[]; glucose_mgdl: number[] };
}

export interface ServiceErrorBody {
  error: { code: string; message: string; field?: string };
}
