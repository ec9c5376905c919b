/** Wire types mirroring the backend's /api JSON schemas. */

export type StainKind = "nuclear" | "membrane";

export type CellClass =
  | "immunopositive"
  | "immunonegative"
  | "m0_no_staining"
  | "m1_faint_incomplete"
  | "m2_moderate_complete"
  | "m3_intense_complete";

export type Provenance = "manual" | "model" | "corrected";

export interface PatchRef {
  slide_id: string;
  x: number;
  y: number;
  width: number;
  height: number;
}

/** Canonical patch key used in /api/patches/{key}/... routes. */
export function patchKey(patch: PatchRef): string {
  return `${patch.slide_id}_${patch.x}_${patch.y}_${patch.width}_${patch.height}`;
}

export type Vertex = [number, number];

export interface AnnotationJson {
  id: string;
  class: CellClass;
  polygon: Vertex[];
  provenance: Provenance;
  confidence?: number | null;
  author: string;
  timestamp: string | null;
}

export interface AnnotationDocumentJson {
  patch: PatchRef;
  version: number;
  saved_at?: string | null;
  annotations: AnnotationJson[];
}

export interface SlideJson {
  id: string;
  width: number;
  height: number;
  resolution: number;
  biomarker: string;
  stain_kind: StainKind;
}

export interface PyramidJson {
  levels: [number, number][];
  tile_size: number;
}

export interface NuclearScoreJson {
  stain_kind: "nuclear";
  positive_count: number;
  negative_count: number;
  total: number;
  percent_positive: number;
}

export interface Her2ScoreJson {
  stain_kind: "membrane";
  counts: Record<string, number>;
  percentages: Record<string, number>;
  total: number;
  score: "0" | "1+" | "2+" | "3+";
  assessment: "Negative" | "Equivocal" | "Positive";
  boundary_flag: boolean;
}

export type ScoreJson = (NuclearScoreJson | Her2ScoreJson) & {
  tau: number;
  patch: string;
  source: string;
};

export interface ApiErrorBody {
  error: { status: number; code: string; message: string };
}

export function deepCopy<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}
