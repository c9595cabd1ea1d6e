/** Typed fetch client for the manualqa service. No business logic here:
 * the UI presents exactly what the API returns. */

import type { AskRequest, AskResponse, ManualSummary, PageDetail } from "./types";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path);
    } catch (err) {
      throw new ApiError(`service unreachable: ${err}`);
    }
    if (!response.ok) {
      throw new ApiError(`GET ${path} failed (${response.status})`, response.status);
    }
    return (await response.json()) as T;
  }

  manuals(): Promise<ManualSummary[]> {
    return this.get<ManualSummary[]>("/manuals");
  }

  page(manualId: string, pageIndex: number): Promise<PageDetail> {
    return this.get<PageDetail>(`/manuals/${encodeURIComponent(manualId)}/pages/${pageIndex}`);
  }

  imageUrl(relative: string): string {
    return this.baseUrl + relative;
  }

  async ask(request: AskRequest, signal?: AbortSignal): Promise<AskResponse> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + "/ask", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(request),
        signal,
      });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError(`service unreachable: ${err}`);
    }
    if (!response.ok) {
      throw new ApiError(`ask failed (${response.status})`, response.status);
    }
    return (await response.json()) as AskResponse;
  }
}
