export { ApiClient, ApiError, type FetchLike } from "./api.js";
export { AnnotationApp, type AppOptions } from "./app.js";
export { FreehandCapture, SIMPLIFY_TOLERANCE_PX, simplifyPolyline } from "./freehand.js";
export {
  CLASS_COLORS,
  annotationAt,
  renderOverlay,
  type DrawSurface,
  type OverlayOptions,
} from "./overlay.js";
export { ScorePanel, formatScore, type ScorePanelState } from "./scorepanel.js";
export {
  EditSession,
  sessionFromPresegmentation,
  sessionFromSaved,
  type SaveOutcome,
} from "./session.js";
export * from "./types.js";
export { TileViewer, type TileSurface } from "./viewer.js";
export {
  ViewState,
  type TileAddress,
  type TilePlacement,
  type Tool,
} from "./viewstate.js";
