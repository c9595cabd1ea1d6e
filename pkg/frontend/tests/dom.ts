/** Shared DOM skeleton matching index.html's element ids. */

export const SKELETON = `
  <div id="error-banner"></div>
  <div id="manual-list"></div>
  <div id="thumbnail-strip"></div>
  <div id="page-viewer"></div>
  <input id="question-input" />
  <button id="ask-button"></button>
  <select id="zoom-select">
    <option value="0.5">50%</option>
    <option value="1" selected>100%</option>
    <option value="1.25">125%</option>
  </select>
  <div id="answer-panel"></div>
  <div id="history-list"></div>
  <div id="legend"></div>
`;

export function installSkeleton(): void {
  document.body.innerHTML = SKELETON;
}

export function flushTasks(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
