// Thin fetch wrapper over the dialogue service JSON API. All payload
// shapes mirror the server's pydantic models; nothing here re-scores or
// re-orders what the service returns.

export interface SessionReply {
  session_id: string;
  topic_id: string;
}

export interface CandidateInfo {
  text: string;
  source: string;
  confidence: number;
  raw_score: number;
}

export interface AttentionEntry {
  text: string;
  weight: number;
}

export interface AttentionReport {
  subject: AttentionEntry[];
  description: AttentionEntry[];
}

export interface ChatReply {
  response: string;
  source: string;
  confidence: number;
  candidates?: CandidateInfo[];
  attention?: AttentionReport;
}

export interface HealthReply {
  status: string;
  model_version: string;
}

/** Anything that should surface in the error banner: HTTP errors carry
 * the status code, network failures leave it undefined. */
export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }
}

function describeDetail(body: unknown): string {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return detail;
    // validation errors arrive as a list of {loc, msg, type}
    if (Array.isArray(detail)) {
      return detail
        .map((e) => (e && typeof e === "object" && "msg" in e ? String(e.msg) : JSON.stringify(e)))
        .join("; ");
    }
  }
  return "";
}

export class ChatApi {
  constructor(readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await fetch(this.base + path, init);
    } catch (err) {
      throw new ApiError(`service unreachable (${err instanceof Error ? err.message : err})`);
    }
    if (!res.ok) {
      let detail = "";
      try {
        detail = describeDetail(await res.json());
      } catch {
        // non-JSON error body; the status line is all we have
      }
      throw new ApiError(detail || `request failed with status ${res.status}`, res.status);
    }
    return res.json() as Promise<T>;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  health(): Promise<HealthReply> {
    return this.request<HealthReply>("/v1/health");
  }

  createSession(topicId?: string): Promise<SessionReply> {
    return this.post<SessionReply>("/v1/sessions", topicId ? { topic_id: topicId } : {});
  }

  chat(sessionId: string, utterance: string, debug: boolean): Promise<ChatReply> {
    return this.post<ChatReply>("/v1/chat", {
      session_id: sessionId,
      utterance,
      debug,
    });
  }
}
