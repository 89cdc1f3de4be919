// Bootstrap: wire the store to the DOM. All interaction goes through the
// store's actions; this file only translates clicks into action calls.

import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import { ConsoleStore } from "./store.js";

declare global {
  interface Window {
    CTXSEARCH_BASE?: string;
  }
}

function bootstrap(): void {
  const base = window.CTXSEARCH_BASE ?? "";
  const params = new URLSearchParams(window.location.search);
  const userId = params.get("user") ?? "trip";

  const client = new ApiClient(base);
  const store = new ConsoleStore(client, userId);

  const root = document.getElementById("app")!;
  const input = document.getElementById("query") as HTMLInputElement;
  const button = document.getElementById("go") as HTMLButtonElement;
  const who = document.getElementById("who")!;
  who.textContent = `user: ${userId}`;

  store.subscribe((state) => {
    root.innerHTML = renderApp(state);
    button.disabled = state.searchInFlight;
  });

  const submit = () => void store.submitQuery(input.value);
  button.addEventListener("click", submit);
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") submit();
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const conceptId = target.dataset.conceptId;
    const docId = target.dataset.docId;
    const state = store.getState();
    const findSuggestion = (id: string) =>
      state.lastResponse?.suggestions.find((s) => s.concept_id === id);

    if (target.classList.contains("chip-accept") && conceptId) {
      const suggestion = findSuggestion(conceptId);
      if (suggestion) {
        void store.acceptSuggestion(suggestion).then(() => {
          input.value = store.getState().queryText;
        });
      }
    } else if (target.classList.contains("chip-dismiss") && conceptId) {
      const suggestion = findSuggestion(conceptId);
      if (suggestion) void store.dismissSuggestion(suggestion);
    } else if (target.classList.contains("rate-up") && docId) {
      void store.rateResult(docId, 1);
    } else if (target.classList.contains("rate-down") && docId) {
      void store.rateResult(docId, -1);
    }
  });
}

document.addEventListener("DOMContentLoaded", bootstrap);
