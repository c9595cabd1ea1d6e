/** Wire types of the manualqa HTTP API (the UI is a thin client over it). */

export type Box = [number, number, number, number]; // x0, y0, x1, y1 in page pixels

export interface ManualSummary {
  id: string;
  brand: string;
  category: string;
  n_pages: number;
}

export interface PageRegion {
  id: string;
  label: string;
  box: Box;
}

export interface PageDetail {
  width: number;
  height: number;
  image_url: string;
  regions: PageRegion[];
}

export interface AskRequest {
  question: string;
  manual_id?: string;
  top_k?: number;
}

export interface AnswerRegion {
  manual_id: string;
  page_index: number;
  region_id: string;
  label: string;
  box: Box;
  probability: number;
}

export interface RetrievedPage {
  manual_id: string;
  page_index: number;
  score: number;
}

export interface AskResponse {
  answer_text: string;
  regions: AnswerRegion[];
  retrieved_pages: RetrievedPage[];
}
