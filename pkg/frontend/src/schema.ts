/**
 * Form-state model for one annotation, mirroring the wire format the
 * service validates.  The submit gate re-checks every server-side
 * invariant locally so a well-behaved client never earns a 400.
 */

export const TIME_TAGS = ["past", "present", "future", "na"] as const;
export const DIRECTIONS = ["down", "up", "na"] as const;

export type TimeTag = (typeof TIME_TAGS)[number];
export type Direction = (typeof DIRECTIONS)[number];
export type Role = "cause" | "effect";

export interface CategoryInfo {
  label: string;
  name: string;
  description: string;
}

export interface OntologyConfig {
  target: string;
  keyword: string;
  causes: CategoryInfo[];
  effects: CategoryInfo[];
}

export interface EntryState {
  role: Role;
  category: string;
  time: TimeTag;
}

/** Everything the form controls can hold, valid or not. */
export interface FormState {
  foreign: boolean;
  containsNarrative: boolean;
  inflationTime: TimeTag;
  inflationDirection: Direction;
  entries: EntryState[];
}

export interface WireNarrativeEntry {
  cause?: string;
  effect?: string;
  time: TimeTag;
}

export interface WireAnnotation {
  foreign: boolean;
  "contains-narrative": boolean;
  "inflation-narratives": {
    "inflation-time": TimeTag;
    "inflation-direction": Direction;
    narratives: WireNarrativeEntry[];
  } | null;
}

export function emptyState(): FormState {
  return {
    foreign: false,
    containsNarrative: false,
    inflationTime: "na",
    inflationDirection: "na",
    entries: [],
  };
}

export function categoriesFor(ontology: OntologyConfig, role: Role): CategoryInfo[] {
  return role === "cause" ? ontology.causes : ontology.effects;
}

/**
 * Problems that must block submission, each tied to the control it
 * belongs to.  An empty list means the state maps to a valid payload.
 */
export interface Problem {
  field: string; // "entries", "entries[2]", ...
  message: string;
}

export function validateState(state: FormState, ontology: OntologyConfig): Problem[] {
  const problems: Problem[] = [];
  if (!state.containsNarrative) {
    return problems; // narrative controls are disabled and ignored
  }
  if (state.entries.length === 0) {
    problems.push({
      field: "entries",
      message: "a narrative annotation needs at least one cause or effect entry",
    });
  }
  const seen = new Set<string>();
  state.entries.forEach((entry, i) => {
    const known = categoriesFor(ontology, entry.role).some(
      (c) => c.label === entry.category,
    );
    if (!known) {
      problems.push({
        field: `entries[${i}]`,
        message: `unknown ${entry.role} category "${entry.category}"`,
      });
    }
    const key = `${entry.role}:${entry.category}`;
    if (seen.has(key)) {
      problems.push({
        field: `entries[${i}]`,
        message: `duplicate entry ${entry.role}=${entry.category}`,
      });
    }
    seen.add(key);
    if (!TIME_TAGS.includes(entry.time)) {
      problems.push({ field: `entries[${i}]`, message: `bad time tag "${entry.time}"` });
    }
  });
  return problems;
}

/** The exact JSON body POST /api/annotations expects. */
export function toPayload(state: FormState): WireAnnotation {
  if (!state.containsNarrative) {
    return {
      foreign: state.foreign,
      "contains-narrative": false,
      "inflation-narratives": null,
    };
  }
  return {
    foreign: state.foreign,
    "contains-narrative": true,
    "inflation-narratives": {
      "inflation-time": state.inflationTime,
      "inflation-direction": state.inflationDirection,
      narratives: state.entries.map((entry) =>
        entry.role === "cause"
          ? { cause: entry.category, time: entry.time }
          : { effect: entry.category, time: entry.time },
      ),
    },
  };
}
