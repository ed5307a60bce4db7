/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const session_bins: (a: number) => number;
export const session_frame_scores: (a: number) => [number, number];
export const session_frames: (a: number) => number;
export const session_iou: (a: number, b: number, c: number, d: number) => [number, number, number];
export const session_mix: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
export const session_model_names: (a: number) => [number, number];
export const session_new: () => [number, number, number];
export const session_regions: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const session_sample_rate: (a: number) => number;
export const session_samples: (a: number) => [number, number];
export const session_score: (a: number, b: number) => [number, number, number];
export const session_span_end: (a: number) => number;
export const session_span_start: (a: number) => number;
export const session_spectrogram: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
