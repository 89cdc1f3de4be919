// Pure state -> HTML string templates. No scoring, no sorting: results and
// suggestions are emitted in exactly the order the service returned them,
// which the tests assert by inspecting the rendered markup.

import type { ViewState } from "./store.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderSense(state: ViewState): string {
  const response = state.lastResponse;
  if (!response) return "";
  if (!response.sense) {
    return `<span class="sense-badge sense-none">literal query</span>`;
  }
  const rejected = response.sense.rejected.map(escapeHtml).join(", ") || "none";
  return (
    `<span class="sense-badge" title="rejected: ${rejected}">` +
    `${escapeHtml(response.sense.chosen)}</span>`
  );
}

export function renderSubQueries(state: ViewState): string {
  const response = state.lastResponse;
  if (!response) return "";
  const items = response.sub_queries
    .map(
      (s) =>
        `<li class="subquery subquery-${s.origin}">` +
        `<span class="weight">${s.weight.toFixed(1)}</span> ` +
        `${escapeHtml(s.query)}</li>`,
    )
    .join("");
  return `<ol class="subqueries">${items}</ol>`;
}

export function renderResults(state: ViewState): string {
  const response = state.lastResponse;
  if (!response) return "";
  if (response.results.length === 0) {
    return `<p class="empty">No results.</p>`;
  }
  const rateDisabled = state.lastResponse ? "" : "disabled";
  const items = response.results
    .map(
      (r) =>
        `<li class="result${r.demoted ? " demoted" : ""}" data-doc-id="${escapeHtml(r.doc_id)}">` +
        `<h3>${escapeHtml(r.title)}</h3>` +
        `<p class="snippet">${escapeHtml(r.snippet)}</p>` +
        `<span class="scores">final ${r.final_score.toFixed(4)}</span>` +
        `<button class="rate-up" data-doc-id="${escapeHtml(r.doc_id)}" ${rateDisabled}>+1</button>` +
        `<button class="rate-down" data-doc-id="${escapeHtml(r.doc_id)}" ${rateDisabled}>-1</button>` +
        `</li>`,
    )
    .join("");
  return `<ol class="results">${items}</ol>`;
}

export function renderSuggestions(state: ViewState): string {
  const response = state.lastResponse;
  if (!response || response.suggestions.length === 0) return "";
  const chips = response.suggestions
    .map((s) => {
      const greyed = state.dismissed.includes(s.concept_id);
      return (
        `<span class="chip${greyed ? " dismissed" : ""}" data-concept-id="${escapeHtml(s.concept_id)}">` +
        `<button class="chip-accept" data-concept-id="${escapeHtml(s.concept_id)}"` +
        `${greyed ? " disabled" : ""}>${escapeHtml(s.label)}</button>` +
        `<button class="chip-dismiss" data-concept-id="${escapeHtml(s.concept_id)}"` +
        `${greyed ? " disabled" : ""}>×</button></span>`
      );
    })
    .join("");
  return `<div class="suggestions">${chips}</div>`;
}

export function renderMessages(state: ViewState): string {
  const parts: string[] = [];
  if (state.banner) parts.push(`<div class="banner">${escapeHtml(state.banner)}</div>`);
  if (state.error) parts.push(`<div class="inline-error">${escapeHtml(state.error)}</div>`);
  if (state.notice) parts.push(`<div class="notice">${escapeHtml(state.notice)}</div>`);
  const warnings = state.lastResponse?.warnings ?? [];
  for (const warning of warnings) {
    parts.push(`<div class="warning">${escapeHtml(warning)}</div>`);
  }
  return parts.join("");
}

export function renderApp(state: ViewState): string {
  return (
    `<section class="messages">${renderMessages(state)}</section>` +
    `<section class="sense">${renderSense(state)}</section>` +
    `<section class="expansion">${renderSubQueries(state)}</section>` +
    `<section class="suggestion-area">${renderSuggestions(state)}</section>` +
    `<section class="result-area">${renderResults(state)}</section>`
  );
}
