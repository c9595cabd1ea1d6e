/**
 * Overlay geometry: map page-pixel boxes onto the rendered page element.
 *
 * All positioning flows through these pure functions so the 1-pixel
 * fidelity contract is testable without a browser layout engine.
 */

import type { Box } from "./types";

export interface RectPx {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Scale factor from page pixels to rendered CSS pixels. */
export function renderScale(pageWidth: number, renderedWidth: number): number {
  if (pageWidth <= 0) throw new Error(`invalid page width ${pageWidth}`);
  return renderedWidth / pageWidth;
}

/** Rendered rectangle for a region box at the given scale. */
export function overlayRect(box: Box, scale: number): RectPx {
  const [x0, y0, x1, y1] = box;
  return {
    left: x0 * scale,
    top: y0 * scale,
    width: (x1 - x0) * scale,
    height: (y1 - y0) * scale,
  };
}

/** CSS declaration for an absolutely positioned overlay rectangle. */
export function rectStyle(rect: RectPx): string {
  return (
    `left:${rect.left.toFixed(2)}px;top:${rect.top.toFixed(2)}px;` +
    `width:${rect.width.toFixed(2)}px;height:${rect.height.toFixed(2)}px`
  );
}
