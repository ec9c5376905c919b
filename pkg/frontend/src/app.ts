/** Browser bootstrap: wires the viewer, overlay, edit session and score
 * panel onto a canvas. Kept thin; all decision logic lives in the
 * headless modules so it stays testable without a DOM. */

import { ApiClient } from "./api.js";
import { FreehandCapture } from "./freehand.js";
import { annotationAt, renderOverlay, type DrawSurface } from "./overlay.js";
import { ScorePanel } from "./scorepanel.js";
import { EditSession, sessionFromPresegmentation, sessionFromSaved } from "./session.js";
import type { AnnotationJson, CellClass } from "./types.js";
import { patchKey } from "./types.js";
import { TileViewer, type TileSurface } from "./viewer.js";
import { ViewState } from "./viewstate.js";

class CanvasSurface implements DrawSurface, TileSurface {
  private readonly ctx: CanvasRenderingContext2D;
  private readonly images = new Map<string, HTMLImageElement>();

  constructor(ctx: CanvasRenderingContext2D) {
    this.ctx = ctx;
  }

  register(url: string, image: HTMLImageElement): void {
    this.images.set(url, image);
  }

  drawTile(url: string, dx: number, dy: number, dw: number, dh: number): void {
    const image = this.images.get(url);
    if (image) {
      this.ctx.drawImage(image, dx, dy, dw, dh);
    }
  }

  private path(points: [number, number][]): void {
    this.ctx.beginPath();
    points.forEach(([x, y], i) => (i ? this.ctx.lineTo(x, y) : this.ctx.moveTo(x, y)));
    this.ctx.closePath();
  }

  strokePolygon(points: [number, number][], color: string, width: number): void {
    this.path(points);
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = width;
    this.ctx.stroke();
  }

  fillPolygon(points: [number, number][], color: string, alpha: number): void {
    this.path(points);
    this.ctx.globalAlpha = alpha;
    this.ctx.fillStyle = color;
    this.ctx.fill();
    this.ctx.globalAlpha = 1;
  }
}

export interface AppOptions {
  baseUrl?: string;
  author?: string;
}

export class AnnotationApp {
  readonly api: ApiClient;
  readonly author: string;
  view: ViewState | null = null;
  session: EditSession | null = null;
  panel: ScorePanel | null = null;
  private viewer: TileViewer;
  private surface: CanvasSurface | null = null;
  private canvas: HTMLCanvasElement | null = null;
  private capture = new FreehandCapture();
  private nextId = 0;

  constructor(options: AppOptions = {}) {
    this.api = new ApiClient(options.baseUrl ?? "");
    this.author = options.author ?? "anonymous";
    this.viewer = new TileViewer(this.api);
    this.viewer.loadTile = (url) =>
      new Promise((resolve, reject) => {
        const image = new Image();
        image.onload = () => {
          this.surface?.register(url, image);
          resolve();
        };
        image.onerror = () => reject(new Error(`failed to load ${url}`));
        image.src = url;
      });
    this.viewer.onTileLoaded = () => this.draw();
  }

  async mount(canvas: HTMLCanvasElement, slideId: string): Promise<void> {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.canvas = canvas;
    this.surface = new CanvasSurface(ctx);
    const pyramid = await this.api.getPyramid(slideId);
    this.view = new ViewState(slideId, pyramid);
    this.view.zoomToFit(canvas.width, canvas.height);
    this.wireEvents(canvas);
    window.addEventListener("beforeunload", (event) => {
      if (this.session?.dirty) {
        event.preventDefault();
      }
    });
    this.draw();
  }

  async openPatch(x: number, y: number, width = 350, height = 350): Promise<void> {
    if (!this.view) throw new Error("mount first");
    const key = patchKey({ slide_id: this.view.slideId, x, y, width, height });
    try {
      this.session = await sessionFromSaved(this.api, key);
    } catch {
      this.session = await sessionFromPresegmentation(this.api, key);
    }
    this.panel = new ScorePanel(this.api, key);
    this.draw();
  }

  private wireEvents(canvas: HTMLCanvasElement): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    canvas.addEventListener("pointerdown", (e) => {
      if (!this.view) return;
      if (this.view.tool === "pan") {
        dragging = true;
        lastX = e.offsetX;
        lastY = e.offsetY;
      } else if (this.view.tool === "draw" && this.view.drawingEnabled) {
        const [x, y] = this.view.toImage(e.offsetX, e.offsetY, canvas.width, canvas.height);
        this.capture.start(x, y);
      } else if (this.view.tool === "delete" && this.session) {
        const [x, y] = this.view.toImage(e.offsetX, e.offsetY, canvas.width, canvas.height);
        const hit = annotationAt(this.session.annotations, x, y);
        if (hit) {
          this.session.deleteAnnotation(hit.id);
          this.draw();
        }
      }
    });
    canvas.addEventListener("pointermove", (e) => {
      if (!this.view) return;
      if (dragging) {
        this.view.panBy(e.offsetX - lastX, e.offsetY - lastY);
        lastX = e.offsetX;
        lastY = e.offsetY;
        this.draw();
      } else if (this.capture.isActive) {
        const [x, y] = this.view.toImage(e.offsetX, e.offsetY, canvas.width, canvas.height);
        this.capture.extend(x, y);
      }
    });
    canvas.addEventListener("pointerup", () => {
      dragging = false;
      if (this.capture.isActive && this.session && this.view?.activeClass) {
        const polygon = this.capture.finish();
        if (polygon) {
          const annotation: AnnotationJson = {
            id: `u${this.nextId++}`,
            class: this.view.activeClass as CellClass,
            polygon,
            provenance: "manual",
            author: this.author,
            timestamp: new Date().toISOString(),
          };
          this.session.addAnnotation(annotation);
        }
        this.draw();
      }
    });
    canvas.addEventListener("wheel", (e) => {
      if (!this.view) return;
      e.preventDefault();
      const factor = e.deltaY < 0 ? 1.25 : 0.8;
      this.view.setZoom(this.view.zoom * factor);
      this.draw();
    });
  }

  draw(): void {
    if (!this.view || !this.surface || !this.canvas) return;
    const { width, height } = this.canvas;
    this.canvas.getContext("2d")?.clearRect(0, 0, width, height);
    this.viewer.render(this.surface, this.view, width, height);
    if (this.session) {
      renderOverlay(this.surface, this.session.annotations, this.view, width, height);
    }
  }

  async save(): Promise<boolean> {
    if (!this.session) return true;
    const outcome = await this.session.save(this.api);
    if (!outcome.ok) {
      // conflict: surface a reload-and-reapply dialog, never merge silently
      const reload = window.confirm(
        "This patch was saved by someone else. Reload the latest version? Your edits will need reapplying.",
      );
      if (reload) {
        await this.session.reload(this.api);
        this.draw();
      }
      return false;
    }
    return true;
  }
}
