// Thin fetch client for the gateway. Every method is one documented API call;
// the store decides when to call what.

import type { ApiErrorBody, FeedbackRequest, FeedbackResponse, SearchResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "Unknown";
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as ApiErrorBody;
    code = body.error.code;
    message = body.error.message;
  } catch {
    // non-JSON error body: keep the fallback
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  search(userId: string, query: string): Promise<SearchResponse> {
    return this.post<SearchResponse>("/v1/search", { user_id: userId, query });
  }

  feedback(request: FeedbackRequest): Promise<FeedbackResponse> {
    return this.post<FeedbackResponse>("/v1/feedback", request);
  }

  async health(): Promise<boolean> {
    try {
      const response = await fetch(`${this.baseUrl}/v1/health`);
      return response.ok;
    } catch {
      return false;
    }
  }
}
