/** Fixed color legend for the six semantic region labels. */

export const LABEL_COLORS: Record<string, string> = {
  Text: "#2563eb",
  Title: "#7c3aed",
  ProductImage: "#dc2626",
  Illustration: "#16a34a",
  Table: "#d97706",
  Graphic: "#0891b2",
};

export const FALLBACK_COLOR = "#6b7280";

export function labelColor(label: string): string {
  return LABEL_COLORS[label] ?? FALLBACK_COLOR;
}
