// Fixed overlay palette. Color assignment must be a pure function of the
// class id so the same part keeps the same color across frames, sessions,
// and page reloads; anything stateful (first-seen order, random hues) would
// break the sorting workflow the overlays exist for.

export const CLASS_PALETTE: readonly string[] = [
  "#e6194b",
  "#3cb44b",
  "#ffe119",
  "#4363d8",
  "#f58231",
  "#911eb4",
  "#42d4f4",
  "#f032e6",
  "#bfef45",
  "#fabed4",
  "#469990",
  "#dcbeff",
  "#9a6324",
  "#fffac8",
  "#800000",
];

export function classColor(categoryId: number): string {
  const n = CLASS_PALETTE.length;
  const idx = ((Math.trunc(categoryId) % n) + n) % n;
  // idx is always in [0, n) after the double modulo, so the lookup is safe.
  return CLASS_PALETTE[idx] as string;
}
