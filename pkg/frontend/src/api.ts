/** Thin client over the guidance service.
 *
 * Every call also keeps the raw response text, and dose values are lifted
 * out of that text verbatim: what the UI shows is the server's own bytes,
 * never a number that went through a parse/format round trip.
 */

import type {
  AdvanceResponse,
  CloseResponse,
  HistoryResponse,
  MealResponse,
  PosteriorView,
  ServiceErrorBody,
  SessionCreated,
  SessionMode,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public field?: string,
  ) {
    super(message);
  }
}

export interface Raw<T> {
  body: T;
  text: string;
}

/** Extract the exact byte sequence serialized for a top-level JSON key. */
export function rawNumberToken(text: string, key: string): string {
  const match = text.match(
    new RegExp(`"${key}"\\s*:\\s*(-?(?:\\d+(?:\\.\\d+)?(?:[eE][+-]?\\d+)?))`),
  );
  if (!match) throw new Error(`no numeric field ${key} in response`);
  return match[1];
}

async function request<T>(
  base: string,
  method: string,
  path: string,
  payload?: unknown,
): Promise<Raw<T>> {
  const response = await fetch(base + path, {
    method,
    headers: payload === undefined ? {} : { "Content-Type": "application/json" },
    body: payload === undefined ? undefined : JSON.stringify(payload),
  });
  const text = await response.text();
  if (!response.ok) {
    let code = "http_error";
    let message = `${response.status} ${response.statusText}`;
    let field: string | undefined;
    try {
      const parsed = JSON.parse(text) as ServiceErrorBody;
      code = parsed.error.code;
      message = parsed.error.message;
      field = parsed.error.field;
    } catch {
      // non-JSON error body: keep the HTTP status text
    }
    throw new ApiError(response.status, code, message, field);
  }
  return { body: JSON.parse(text) as T, text };
}

export class GuidanceClient {
  constructor(public base: string) {}

  createSession(mode: SessionMode, seed?: number): Promise<Raw<SessionCreated>> {
    return request(this.base, "POST", "/sessions", { mode, seed });
  }

  announceMeal(
    sessionId: string,
    category: string,
    options: { time_min?: number; cho_grams?: number } = {},
  ): Promise<Raw<MealResponse>> {
    return request(this.base, "POST", `/sessions/${sessionId}/meals`, {
      size_category: category,
      ...options,
    });
  }

  submitCgm(
    sessionId: string,
    samples: { t_min: number; glucose_mgdl: number }[],
  ): Promise<Raw<{ accepted: number; window_samples: number }>> {
    return request(this.base, "POST", `/sessions/${sessionId}/cgm`, { samples });
  }

  advance(sessionId: string, minutes: number): Promise<Raw<AdvanceResponse>> {
    return request(this.base, "POST", `/sessions/${sessionId}/advance`, { minutes });
  }

  closeEpisode(sessionId: string, now?: number): Promise<Raw<CloseResponse>> {
    return request(this.base, "POST", `/sessions/${sessionId}/close`, { now });
  }

  posterior(sessionId: string, category?: string): Promise<Raw<PosteriorView>> {
    const query = category ? `?category=${encodeURIComponent(category)}` : "";
    return request(this.base, "GET", `/sessions/${sessionId}/posterior${query}`);
  }

  history(sessionId: string): Promise<Raw<HistoryResponse>> {
    return request(this.base, "GET", `/sessions/${sessionId}/history`);
  }
}
