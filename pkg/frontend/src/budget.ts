/** The server rejects more than K conditions; the UI must never send them. */
export function conditionCount(selected: Set<number>, words: string[]): number {
  return selected.size + words.length;
}

export function budgetOk(
  selected: Set<number>,
  words: string[],
  k: number,
): boolean {
  return conditionCount(selected, words) <= k;
}

export function budgetMessage(
  selected: Set<number>,
  words: string[],
  k: number,
): string | null {
  const n = conditionCount(selected, words);
  if (n <= k) return null;
  return `${n} conditions selected; at most ${k} topics plus words are allowed`;
}
