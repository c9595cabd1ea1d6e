/**
 * Interactive QA client: pick a manual, ask questions, inspect answers.
 *
 * Thin-client contract: every answer, region probability, and retrieval
 * score shown here comes verbatim from the service; the UI only scales
 * region boxes onto the rendered page and keeps session history.
 */

import { ApiClient, ApiError } from "./api";
import { overlayRect, rectStyle, renderScale } from "./geometry";
import { LABEL_COLORS, labelColor } from "./labels";
import { AskSession, SupersededError } from "./state";
import type { AnswerRegion, ManualSummary, PageDetail } from "./types";

export interface AppElements {
  manualList: HTMLElement;
  thumbnailStrip: HTMLElement;
  pageViewer: HTMLElement;
  questionInput: HTMLInputElement;
  askButton: HTMLButtonElement;
  answerPanel: HTMLElement;
  historyList: HTMLElement;
  errorBanner: HTMLElement;
  legend: HTMLElement;
  zoomSelect: HTMLSelectElement;
}

export class App {
  private selectedManual: ManualSummary | null = null;
  private currentPage: { index: number; detail: PageDetail } | null = null;
  private currentRegions: AnswerRegion[] = [];
  readonly session = new AskSession();

  constructor(
    private readonly api: ApiClient,
    private readonly el: AppElements,
    private readonly doc: Document,
  ) {
    el.askButton.disabled = true;
    el.questionInput.addEventListener("input", () => {
      el.askButton.disabled = el.questionInput.value.trim() === "";
    });
    el.askButton.addEventListener("click", () => void this.ask(el.questionInput.value));
    el.questionInput.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter" && !el.askButton.disabled) {
        void this.ask(el.questionInput.value);
      }
    });
    el.zoomSelect.addEventListener("change", () => this.renderPage());
    this.renderLegend();
  }

  get zoom(): number {
    return parseFloat(this.el.zoomSelect.value || "1");
  }

  // ---- error banner -------------------------------------------------------

  private showError(message: string, retry: () => void): void {
    this.el.errorBanner.innerHTML = "";
    this.el.errorBanner.classList.add("visible");
    const text = this.doc.createElement("span");
    text.textContent = message;
    const button = this.doc.createElement("button");
    button.textContent = "retry";
    button.className = "retry";
    button.addEventListener("click", () => {
      this.clearError();
      retry();
    });
    this.el.errorBanner.append(text, button);
  }

  private clearError(): void {
    this.el.errorBanner.classList.remove("visible");
    this.el.errorBanner.innerHTML = "";
  }

  // ---- manual browser -----------------------------------------------------

  async loadManuals(): Promise<void> {
    let manuals: ManualSummary[];
    try {
      manuals = await this.api.manuals();
    } catch (err) {
      this.showError(
        err instanceof ApiError ? err.message : `failed to load manuals: ${err}`,
        () => void this.loadManuals(),
      );
      return;
    }
    this.clearError();
    this.el.manualList.innerHTML = "";
    for (const manual of manuals) {
      const card = this.doc.createElement("button");
      card.className = "manual-card";
      card.dataset.manualId = manual.id;
      card.textContent = `${manual.brand} ${manual.category} (${manual.n_pages} pages)`;
      card.addEventListener("click", () => void this.selectManual(manual));
      this.el.manualList.appendChild(card);
    }
  }

  async selectManual(manual: ManualSummary): Promise<void> {
    this.selectedManual = manual;
    for (const card of Array.from(this.el.manualList.children)) {
      card.classList.toggle(
        "selected",
        (card as HTMLElement).dataset.manualId === manual.id,
      );
    }
    this.el.thumbnailStrip.innerHTML = "";
    for (let index = 0; index < manual.n_pages; index += 1) {
      const thumb = this.doc.createElement("button");
      thumb.className = "thumb";
      thumb.dataset.pageIndex = String(index);
      thumb.textContent = `p${index}`;
      thumb.addEventListener("click", () => void this.openPage(index));
      this.el.thumbnailStrip.appendChild(thumb);
    }
    if (manual.n_pages > 0) await this.openPage(0);
  }

  // ---- page viewer --------------------------------------------------------

  async openPage(index: number, regions: AnswerRegion[] = []): Promise<void> {
    if (!this.selectedManual) return;
    let detail: PageDetail;
    try {
      detail = await this.api.page(this.selectedManual.id, index);
    } catch (err) {
      this.showError(`failed to load page ${index}: ${err}`, () => void this.openPage(index));
      return;
    }
    this.currentPage = { index, detail };
    this.currentRegions = regions;
    this.renderPage();
  }

  renderPage(): void {
    if (!this.currentPage) return;
    const { detail, index } = this.currentPage;
    const scale = renderScale(detail.width, detail.width * this.zoom);
    const viewer = this.el.pageViewer;
    viewer.innerHTML = "";
    const frame = this.doc.createElement("div");
    frame.className = "page-frame";
    frame.dataset.pageIndex = String(index);
    frame.setAttribute(
      "style",
      `position:relative;width:${(detail.width * scale).toFixed(2)}px;` +
        `height:${(detail.height * scale).toFixed(2)}px`,
    );
    const img = this.doc.createElement("img");
    img.src = this.api.imageUrl(detail.image_url);
    img.setAttribute("style", "width:100%;height:100%");
    frame.appendChild(img);
    for (const region of this.currentRegions) {
      if (region.page_index !== index) continue;
      const rect = overlayRect(region.box, scale);
      const overlay = this.doc.createElement("div");
      overlay.className = "overlay";
      overlay.dataset.regionId = region.region_id;
      overlay.dataset.label = region.label;
      overlay.title = `${region.label} p=${region.probability.toFixed(2)}`;
      overlay.setAttribute(
        "style",
        `position:absolute;${rectStyle(rect)};border:2px solid ${labelColor(region.label)}`,
      );
      frame.appendChild(overlay);
    }
    viewer.appendChild(frame);
  }

  // ---- ask panel ----------------------------------------------------------

  async ask(question: string): Promise<void> {
    if (question.trim() === "") return;
    let response;
    try {
      response = await this.session.submit(this.api, {
        question,
        manual_id: this.selectedManual?.id,
      });
    } catch (err) {
      if (err instanceof SupersededError) return;
      this.showError(`ask failed: ${err}`, () => void this.ask(question));
      return;
    }
    this.clearError();
    this.renderAnswer(question, response.answer_text, response);
    this.renderHistory();
    const target = response.regions[0] ?? null;
    if (target && this.selectedManual && target.manual_id === this.selectedManual.id) {
      await this.openPage(target.page_index, response.regions);
    } else if (response.retrieved_pages[0]) {
      const top = response.retrieved_pages[0];
      if (this.selectedManual && top.manual_id === this.selectedManual.id) {
        await this.openPage(top.page_index, response.regions);
      }
    }
  }

  private renderAnswer(question: string, text: string, response: {
    regions: AnswerRegion[];
    retrieved_pages: { manual_id: string; page_index: number; score: number }[];
  }): void {
    const panel = this.el.answerPanel;
    panel.innerHTML = "";
    const answer = this.doc.createElement("p");
    answer.className = "answer-text";
    answer.textContent = text;
    panel.appendChild(answer);
    const regionList = this.doc.createElement("ul");
    regionList.className = "answer-regions";
    for (const region of response.regions) {
      const item = this.doc.createElement("li");
      item.textContent =
        `${region.label} on page ${region.page_index} (p=${region.probability.toFixed(2)})`;
      item.setAttribute("style", `color:${labelColor(region.label)}`);
      regionList.appendChild(item);
    }
    panel.appendChild(regionList);
    const trace = this.doc.createElement("ol");
    trace.className = "retrieval-trace";
    for (const hit of response.retrieved_pages) {
      const item = this.doc.createElement("li");
      item.textContent = `${hit.manual_id} page ${hit.page_index}: ${hit.score.toFixed(4)}`;
      trace.appendChild(item);
    }
    panel.appendChild(trace);
  }

  private renderHistory(): void {
    this.el.historyList.innerHTML = "";
    for (const entry of [...this.session.history].reverse()) {
      const item = this.doc.createElement("button");
      item.className = "history-item";
      item.textContent = entry.question;
      item.addEventListener("click", () => {
        this.el.questionInput.value = entry.question;
        this.el.askButton.disabled = false;
        void this.ask(entry.question);
      });
      this.el.historyList.appendChild(item);
    }
  }

  private renderLegend(): void {
    this.el.legend.innerHTML = "";
    for (const [label, color] of Object.entries(LABEL_COLORS)) {
      const chip = this.doc.createElement("span");
      chip.className = "legend-chip";
      chip.textContent = label;
      chip.setAttribute("style", `border-left:12px solid ${color};padding-left:4px`);
      this.el.legend.appendChild(chip);
    }
  }
}

export function mountApp(doc: Document, baseUrl: string, fetchFn?: typeof fetch): App {
  const byId = (id: string) => {
    const node = doc.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node;
  };
  const api = new ApiClient(baseUrl, fetchFn ?? fetch);
  const app = new App(api, {
    manualList: byId("manual-list"),
    thumbnailStrip: byId("thumbnail-strip"),
    pageViewer: byId("page-viewer"),
    questionInput: byId("question-input") as HTMLInputElement,
    askButton: byId("ask-button") as HTMLButtonElement,
    answerPanel: byId("answer-panel"),
    historyList: byId("history-list"),
    errorBanner: byId("error-banner"),
    legend: byId("legend"),
    zoomSelect: byId("zoom-select") as HTMLSelectElement,
  }, doc);
  void app.loadManuals();
  return app;
}
