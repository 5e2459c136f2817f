/** Deterministic RNG and a generator for every form state the UI can submit. */

import {
  EntryState,
  FormState,
  OntologyConfig,
  Role,
  TIME_TAGS,
  DIRECTIONS,
  categoriesFor,
} from "../src/schema.js";

/** mulberry32: tiny seedable PRNG, plenty for state generation. */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function pick<T>(rand: () => number, items: readonly T[]): T {
  return items[Math.floor(rand() * items.length)];
}

/**
 * A state reachable through the controls that also passes the submit
 * gate: either non-narrative, or narrative with 1..4 distinct entries.
 * This is the population the zero-400s contract quantifies over.
 */
export function randomSubmittableState(
  rand: () => number,
  ontology: OntologyConfig,
): FormState {
  const foreign = rand() < 0.15;
  if (rand() < 0.4) {
    return {
      foreign,
      containsNarrative: false,
      inflationTime: "na",
      inflationDirection: "na",
      entries: [],
    };
  }
  const entries: EntryState[] = [];
  const used = new Set<string>();
  const target = 1 + Math.floor(rand() * 4);
  while (entries.length < target) {
    const role: Role = rand() < 0.5 ? "cause" : "effect";
    const category = pick(rand, categoriesFor(ontology, role)).label;
    const key = `${role}:${category}`;
    if (used.has(key)) continue; // the picker toggles, so no duplicates
    used.add(key);
    entries.push({ role, category, time: pick(rand, TIME_TAGS) });
  }
  return {
    foreign,
    containsNarrative: true,
    inflationTime: pick(rand, TIME_TAGS),
    inflationDirection: pick(rand, DIRECTIONS),
    entries,
  };
}
