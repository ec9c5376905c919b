/** Editing session over one annotation document.
 *
 * Implements the correction workflow: load a model presegmentation (or a
 * saved document), delete/reshape/reclassify annotations, then save with
 * optimistic versioning. Touching a model-provenance annotation flips it
 * to "corrected"; untouched ones keep "model". Every mutation pushes an
 * undo snapshot that restores exact prior geometry.
 */

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type {
  AnnotationDocumentJson,
  AnnotationJson,
  CellClass,
  Vertex,
} from "./types.js";
import { deepCopy, patchKey } from "./types.js";

export type SaveOutcome =
  | { ok: true; version: number }
  | { ok: false; conflict: true; latestVersion: number | null };

export class EditSession {
  private doc: AnnotationDocumentJson;
  private undoStack: AnnotationJson[][] = [];
  private _dirty = false;

  constructor(doc: AnnotationDocumentJson) {
    this.doc = deepCopy(doc);
  }

  get document(): AnnotationDocumentJson {
    return this.doc;
  }

  get dirty(): boolean {
    return this._dirty;
  }

  get key(): string {
    return patchKey(this.doc.patch);
  }

  get annotations(): readonly AnnotationJson[] {
    return this.doc.annotations;
  }

  find(id: string): AnnotationJson | undefined {
    return this.doc.annotations.find((a) => a.id === id);
  }

  private snapshot(): void {
    this.undoStack.push(deepCopy(this.doc.annotations));
    this._dirty = true;
  }

  private touch(annotation: AnnotationJson): void {
    if (annotation.provenance === "model") {
      annotation.provenance = "corrected";
    }
  }

  private require(id: string): AnnotationJson {
    const found = this.find(id);
    if (!found) {
      throw new Error(`no annotation with id ${id}`);
    }
    return found;
  }

  deleteAnnotation(id: string): void {
    this.require(id);
    this.snapshot();
    this.doc.annotations = this.doc.annotations.filter((a) => a.id !== id);
  }

  reclassify(id: string, cellClass: CellClass): void {
    const annotation = this.require(id);
    this.snapshot();
    annotation.class = cellClass;
    this.touch(annotation);
  }

  reshape(id: string, polygon: Vertex[]): void {
    const annotation = this.require(id);
    this.snapshot();
    annotation.polygon = deepCopy(polygon);
    this.touch(annotation);
  }

  addAnnotation(annotation: AnnotationJson): void {
    if (this.find(annotation.id)) {
      throw new Error(`duplicate annotation id ${annotation.id}`);
    }
    this.snapshot();
    this.doc.annotations = [...this.doc.annotations, deepCopy(annotation)];
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  undo(): void {
    const previous = this.undoStack.pop();
    if (!previous) return;
    this.doc.annotations = previous;
    if (this.undoStack.length === 0) {
      this._dirty = false;
    }
  }

  /** Persist through the API; the base version travels in the document.
   * A 409 reports a conflict (reload-and-reapply is the caller's call:
   * no silent merge). */
  async save(api: ApiClient): Promise<SaveOutcome> {
    try {
      const { version } = await api.putAnnotations(this.key, this.doc);
      this.doc.version = version;
      this._dirty = false;
      this.undoStack = [];
      return { ok: true, version };
    } catch (err) {
      if (err instanceof ApiError && err.code === "conflict") {
        let latestVersion: number | null = null;
        try {
          latestVersion = (await api.getAnnotations(this.key)).version;
        } catch {
          latestVersion = null;
        }
        return { ok: false, conflict: true, latestVersion };
      }
      throw err;
    }
  }

  /** Reload the latest stored version, dropping local edits. */
  async reload(api: ApiClient): Promise<void> {
    this.doc = await api.getAnnotations(this.key);
    this.undoStack = [];
    this._dirty = false;
  }
}

/** Start a session from the model presegmentation of a patch. */
export async function sessionFromPresegmentation(
  api: ApiClient,
  key: string,
  predictionFile?: string,
): Promise<EditSession> {
  return new EditSession(await api.presegment(key, predictionFile));
}

/** Start a session from the latest saved document of a patch. */
export async function sessionFromSaved(api: ApiClient, key: string): Promise<EditSession> {
  return new EditSession(await api.getAnnotations(key));
}
