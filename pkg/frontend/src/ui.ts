// HTML renderers. Each returns a markup string for innerHTML; main.ts
// owns the actual DOM nodes. Keeping these as string -> string makes the
// render path testable without a browser.

import { AttentionReport, CandidateInfo } from "./api.js";
import { BarView, TurnView, attentionBars, confidencePct } from "./view.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function badgeClass(source: string): string {
  // class names come from server-controlled source tags; keep them tame
  return "badge badge-" + source.toLowerCase().replace(/[^a-z0-9]+/g, "-");
}

export function renderTurn(turn: TurnView): string {
  const meta =
    turn.speaker === "system"
      ? `<span class="${badgeClass(turn.source ?? "")}">${escapeHtml(turn.source ?? "")}</span>` +
        `<span class="conf">${confidencePct(turn.confidence ?? 0)}</span>`
      : "";
  return (
    `<div class="turn turn-${turn.speaker}">` +
    `<div class="bubble">${escapeHtml(turn.text)}</div>` +
    `<div class="meta">${meta}<span class="ts">${escapeHtml(turn.timestamp)}</span></div>` +
    `</div>`
  );
}

/** Rows appear exactly in payload order; the service already ranks by
 * confidence and the panel must not second-guess that. */
export function renderCandidateTable(candidates: CandidateInfo[]): string {
  const rows = candidates
    .map(
      (c, i) =>
        `<tr><td>${i + 1}</td>` +
        `<td class="cand-text">${escapeHtml(c.text)}</td>` +
        `<td><span class="${badgeClass(c.source)}">${escapeHtml(c.source)}</span></td>` +
        `<td class="num">${confidencePct(c.confidence)}</td>` +
        `<td class="num">${c.raw_score.toFixed(3)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="candidates"><thead><tr>` +
    `<th>#</th><th>candidate</th><th>source</th><th>confidence</th><th>raw score</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

function renderHop(title: string, bars: BarView[]): string {
  const rows = bars
    .map(
      (b) =>
        `<div class="att-row" title="weight ${b.weight.toFixed(6)}">` +
        `<span class="att-label">${escapeHtml(b.text)}</span>` +
        `<span class="att-bar" style="width:${b.pct.toFixed(2)}%"></span>` +
        `</div>`,
    )
    .join("");
  return `<div class="hop"><h4>${escapeHtml(title)}</h4>${rows}</div>`;
}

export function renderAttention(report: AttentionReport): string {
  return (
    renderHop("subject facts (hop 1)", attentionBars(report.subject)) +
    renderHop("description facts (hop 2)", attentionBars(report.description))
  );
}

export function renderError(message: string): string {
  return `<div class="error-banner">${escapeHtml(message)}</div>`;
}
