// Wire types for the annotation service. The three label vocabularies must
// stay byte-identical to the service enums; the contract test pins them
// against the exported OpenAPI schema.

export const QUALITIES = ["Excellent", "Satisfactory", "Poor"] as const;
export type Quality = (typeof QUALITIES)[number];

export const CHARACTERISTICS = [
  "ImageCreation",
  "ImageComparison",
  "IntrinsicImageUnderstanding",
  "ExtrinsicImageUnderstanding",
] as const;
export type Characteristic = (typeof CHARACTERISTICS)[number];

export const ERROR_TAGS = ["ImgCapMismatch", "Incoherence", "Hallucination"] as const;
export type ErrorTag = (typeof ERROR_TAGS)[number];

export interface AnnotationBody {
  quality: Quality;
  characteristics: Characteristic[];
  error_tags: ErrorTag[];
}

export interface TextSegmentDict {
  type: "text";
  content: string;
  span: [number, number];
}

export interface ImageSegmentDict {
  type: "image";
  index: number;
  description: string;
  span: [number, number];
}

export type SegmentDict = TextSegmentDict | ImageSegmentDict;

export interface TurnDict {
  instruction: SegmentDict[];
  response: SegmentDict[];
}

export interface RosterEntryDict {
  image_id: string;
  caption: string;
  uri: string;
}

export interface ConversationDict {
  conversation_id: string;
  turns: TurnDict[];
  roster: Record<string, RosterEntryDict>;
  provenance?: Record<string, unknown>;
}

export type QueueStatus = "generating" | "pending" | "annotated";

export interface QueueItem {
  conversation_id: string;
  status: QueueStatus;
  quality: Quality | null;
}

export interface QueueResponse {
  iteration: number;
  promoted: boolean;
  items: QueueItem[];
}

export interface HistoryRecord {
  iteration: number;
  conversation_ids: string[];
  overflow: number;
  promoted: boolean;
  promoted_ids: string[];
}

export interface IterationsState {
  iteration: number;
  frozen: boolean;
  freeze_after: number;
  pending: string[];
  generation: string;
  history: HistoryRecord[];
}

export interface AnnotationDict {
  quality: Quality;
  characteristics: Characteristic[];
  error_tags: ErrorTag[];
  annotator: string;
  iteration: number;
}

// POST /annotation echoes the id alongside the stored annotation
export interface AnnotationEcho extends AnnotationDict {
  conversation_id: string;
}

export interface ConversationDetail {
  conversation: ConversationDict;
  status: QueueStatus;
  annotation: AnnotationDict | null;
  verdict: Record<string, unknown> | null;
}

export interface SeedExampleSummary {
  conversation_id: string;
  quality: Quality;
  characteristics: Characteristic[];
  annotator: string;
  iteration: number;
}

export interface SeedsetResponse {
  size: number;
  frozen: boolean;
  examples: SeedExampleSummary[];
}

export interface StartIterationResponse {
  iteration: number;
  batch: string[];
  queued: number;
}

export interface PromoteResponse {
  promoted: string[];
  iteration: number;
  frozen: boolean;
  seedset_size: number;
}
