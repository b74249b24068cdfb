// Pure payload -> view-model helpers. Everything the UI shows is a
// deterministic function of the API replies, so these are the only
// places any number gets transformed before rendering.

import { AttentionEntry, ChatReply } from "./api.js";

export interface TurnView {
  speaker: "user" | "system";
  text: string;
  source?: string;
  confidence?: number;
  timestamp: string;
}

export interface BarView {
  text: string;
  weight: number; // raw attention weight, shown on hover
  pct: number; // share of the hop's total mass, 0..100
}

function clock(now: Date): string {
  const pad = (n: number) => String(n).padStart(2, "0");
  return `${pad(now.getHours())}:${pad(now.getMinutes())}:${pad(now.getSeconds())}`;
}

export function userTurn(text: string, now: Date = new Date()): TurnView {
  return { speaker: "user", text, timestamp: clock(now) };
}

export function systemTurn(reply: ChatReply, now: Date = new Date()): TurnView {
  return {
    speaker: "system",
    text: reply.response,
    source: reply.source,
    confidence: reply.confidence,
    timestamp: clock(now),
  };
}

/** Bar lengths are the entry's share of the hop total, so each hop's
 * bars sum to 100. Order is preserved from the payload (the service
 * already sends heaviest-first). A degenerate all-zero hop renders as
 * zero-width bars rather than NaN. */
export function attentionBars(entries: AttentionEntry[]): BarView[] {
  const total = entries.reduce((acc, e) => acc + e.weight, 0);
  return entries.map((e) => ({
    text: e.text,
    weight: e.weight,
    pct: total > 0 ? (100 * e.weight) / total : 0,
  }));
}

export function confidencePct(confidence: number): string {
  return `${(100 * confidence).toFixed(1)}%`;
}
