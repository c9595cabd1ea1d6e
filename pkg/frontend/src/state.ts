/** Session state: question history and single-in-flight ask discipline.
 * A newer submission aborts the older one; stale responses never surface. */

import { ApiClient } from "./api";
import type { AskRequest, AskResponse } from "./types";

export interface HistoryEntry {
  question: string;
  manualId?: string;
  response: AskResponse;
  at: number;
}

export class SupersededError extends Error {
  constructor() {
    super("superseded by a newer question");
  }
}

export class AskSession {
  readonly history: HistoryEntry[] = [];
  private controller: AbortController | null = null;
  private sequence = 0;

  /** Submit a question, cancelling any in-flight one. */
  async submit(api: ApiClient, request: AskRequest): Promise<AskResponse> {
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    const ticket = ++this.sequence;
    let response: AskResponse;
    try {
      response = await api.ask(request, controller.signal);
    } catch (err) {
      if (controller.signal.aborted) throw new SupersededError();
      throw err;
    }
    if (ticket !== this.sequence) throw new SupersededError();
    this.history.push({
      question: request.question,
      manualId: request.manual_id,
      response,
      at: Date.now(),
    });
    return response;
  }
}
