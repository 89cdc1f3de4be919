// View state and actions for the console.
//
// Invariants the tests pin down:
//   - the view renders strictly from the last SearchResponse; nothing here
//     reorders or rescores results;
//   - at most one search is in flight (extra submits are no-ops);
//   - feedback POSTs are queued FIFO;
//   - a suggestion click while its feedback is pending is a no-op.

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type { SearchResponse, Suggestion } from "./types.js";

export interface ViewState {
  userId: string;
  queryText: string;
  lastResponse: SearchResponse | null;
  searchInFlight: boolean;
  pendingFeedback: number;
  dismissed: string[]; // concept ids whose chips are greyed
  error: string | null; // inline validation / error message
  banner: string | null; // service-level failure banner
  notice: string | null; // acknowledgements ("feedback recorded")
}

type Listener = (state: Readonly<ViewState>) => void;

export class ConsoleStore {
  private state: ViewState;
  private listeners: Listener[] = [];
  private feedbackQueue: Promise<void> = Promise.resolve();
  private suggestionPending = false;

  constructor(
    private client: ApiClient,
    userId: string,
  ) {
    this.state = {
      userId,
      queryText: "",
      lastResponse: null,
      searchInFlight: false,
      pendingFeedback: 0,
      dismissed: [],
      error: null,
      banner: null,
      notice: null,
    };
  }

  getState(): Readonly<ViewState> {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  setQueryText(text: string): void {
    this.update({ queryText: text });
  }

  canRate(): boolean {
    return this.state.lastResponse !== null;
  }

  async submitQuery(text: string): Promise<void> {
    if (this.state.searchInFlight) return; // single in-flight search
    const trimmed = text.trim();
    if (!trimmed) {
      this.update({ error: "Enter at least one search term.", notice: null });
      return; // no request for an empty box
    }
    this.update({ queryText: trimmed, searchInFlight: true, error: null, banner: null, notice: null });
    try {
      const response = await this.client.search(this.state.userId, trimmed);
      this.update({ lastResponse: response, dismissed: [], searchInFlight: false });
    } catch (err) {
      this.handleSearchError(err);
    }
  }

  private handleSearchError(err: unknown): void {
    if (err instanceof ApiError && err.status === 503) {
      this.update({ banner: "Search unavailable: every backend failed.", searchInFlight: false });
    } else if (err instanceof ApiError && err.status === 400) {
      this.update({ error: err.message, searchInFlight: false });
    } else {
      this.update({ banner: "Cannot reach the search service.", searchInFlight: false });
    }
  }

  /** Queue one feedback POST; calls run strictly in submission order. */
  private enqueueFeedback(send: () => Promise<unknown>): Promise<void> {
    this.update({ pendingFeedback: this.state.pendingFeedback + 1 });
    const next = this.feedbackQueue.then(async () => {
      try {
        await send();
        this.update({ pendingFeedback: this.state.pendingFeedback - 1, notice: "Feedback recorded." });
      } catch {
        this.update({
          pendingFeedback: this.state.pendingFeedback - 1,
          banner: "Feedback could not be delivered.",
        });
      }
    });
    this.feedbackQueue = next;
    return next;
  }

  /** Accept a suggestion chip: one feedback POST, then a search for its label. */
  async acceptSuggestion(suggestion: Suggestion): Promise<void> {
    if (this.suggestionPending) return; // double-click protection
    this.suggestionPending = true;
    try {
      await this.enqueueFeedback(() =>
        this.client.feedback({
          user_id: this.state.userId,
          kind: "suggestion_accept",
          target: suggestion.concept_id,
        }),
      );
      await this.submitQuery(suggestion.label);
    } finally {
      this.suggestionPending = false;
    }
  }

  async dismissSuggestion(suggestion: Suggestion): Promise<void> {
    if (this.state.dismissed.includes(suggestion.concept_id)) return;
    this.update({ dismissed: [...this.state.dismissed, suggestion.concept_id] });
    await this.enqueueFeedback(() =>
      this.client.feedback({
        user_id: this.state.userId,
        kind: "suggestion_dismiss",
        target: suggestion.concept_id,
      }),
    );
  }

  /** Rate a result in [-1, 1]. Rejected client-side outside that range. */
  async rateResult(docId: string, value: number): Promise<void> {
    const response = this.state.lastResponse;
    if (!response) return; // controls are disabled without a prior search
    if (!(value >= -1 && value <= 1)) {
      this.update({ error: "Rating must be between -1 and 1." });
      return;
    }
    const hit = response.results.find((r) => r.doc_id === docId);
    if (!hit) return;
    await this.enqueueFeedback(() =>
      this.client.feedback({
        user_id: this.state.userId,
        kind: "rating",
        target: docId,
        value,
        title: hit.title,
      }),
    );
  }
}
