// Mirrors of the service's JSON bodies (see the backend's schemas/ dir).

export type ModelLabel = "title2story" | "planwrite" | "planrevise";

export type SessionMode =
  | "machine_only"
  | "diversity_only"
  | "storyline_only"
  | "story_only"
  | "all"
  | "turn_taking";

export type ProvenanceKind = "machine" | "human" | "human_edited";

export interface Provenance {
  kind: ProvenanceKind;
  original?: string;
}

export interface Item {
  tokens: string[];
  display: string;
  provenance: Provenance;
}

export interface PlainSentence {
  tokens: string[];
  display: string;
}

export interface Diversity {
  plan_temperature: number;
  story_temperature: number | null;
}

export interface SessionState {
  schema: number;
  id: string;
  mode: SessionMode;
  model: ModelLabel;
  seed: number;
  topic: string[];
  topic_display: string;
  diversity: Diversity;
  storyline: Item[];
  story: Item[];
  cross_stories: Record<string, PlainSentence[]> | null;
  events_applied: number;
  turn_owner: "human" | "machine" | null;
  committed: number;
  done: boolean;
}

export interface CrossResponse {
  topic: PlainSentence;
  storyline: PlainSentence[];
  stories: PlainSentence[][];
  model_labels: ModelLabel[];
}

export interface ModelsResponse {
  choices: ModelLabel[];
  default_model: ModelLabel;
  default_diversity: Diversity;
  default_beam_size: number;
  temperature_bounds: [number, number];
  modes: SessionMode[];
}

export type EventKind =
  | "set_topic"
  | "set_diversity"
  | "select_model"
  | "generate_phrase"
  | "generate_all_phrases"
  | "edit_phrase"
  | "delete_phrase"
  | "generate_sentence"
  | "generate_all_sentences"
  | "edit_sentence"
  | "delete_sentence"
  | "regenerate_sentence"
  | "regenerate_phrase"
  | "commit_turn"
  | "done";

export interface EventBody {
  kind: EventKind;
  index?: number;
  text?: string;
  choice?: ModelLabel;
  plan_temperature?: number;
  story_temperature?: number;
}

export interface ApiErrorBody {
  error: string;
  rule?: string;
  reference?: string;
}
