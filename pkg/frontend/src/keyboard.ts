// Keyboard shortcuts for annotating without touching the mouse.

import { CHARACTERISTICS, QUALITIES } from "./types";
import type { Characteristic, Quality } from "./types";

export type Action =
  | { kind: "set-quality"; quality: Quality }
  | { kind: "toggle-characteristic"; characteristic: Characteristic }
  | { kind: "submit" }
  | { kind: "move"; delta: number };

const CHARACTERISTIC_KEYS = ["a", "b", "c", "d"] as const;

export function actionForKey(key: string): Action | null {
  const digit = Number.parseInt(key, 10);
  if (digit >= 1 && digit <= QUALITIES.length) {
    return { kind: "set-quality", quality: QUALITIES[digit - 1] };
  }
  const charIndex = CHARACTERISTIC_KEYS.indexOf(key as (typeof CHARACTERISTIC_KEYS)[number]);
  if (charIndex >= 0) {
    return { kind: "toggle-characteristic", characteristic: CHARACTERISTICS[charIndex] };
  }
  if (key === "Enter") return { kind: "submit" };
  if (key === "j" || key === "ArrowDown") return { kind: "move", delta: 1 };
  if (key === "k" || key === "ArrowUp") return { kind: "move", delta: -1 };
  return null;
}
