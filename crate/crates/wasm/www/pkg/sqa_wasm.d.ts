/* tslint:disable */
/* eslint-disable */

export class Session {
    free(): void;
    [Symbol.dispose](): void;
    bins(): number;
    frame_scores(): Float64Array;
    frames(): number;
    /**
     * Overlap of the detected regions with the frames that were corrupted.
     */
    iou(threshold: number, min_len: number, smooth: number): number;
    /**
     * Builds a new utterance. `start`/`end` are fractions of its length
     * delimiting the corrupted part; `noise` picks filtered white (0),
     * chirp (1) or impulses (2).
     */
    mix(seed: number, secs: number, noise: number, snr_db: number, start: number, end: number): void;
    /**
     * Tags of the embedded models, in the order `score` indexes them.
     */
    model_names(): string[];
    constructor();
    /**
     * Detected regions as flat inclusive `[start, end, start, end, ...]`.
     */
    regions(threshold: number, min_len: number, smooth: number): Uint32Array;
    sample_rate(): number;
    samples(): Float32Array;
    /**
     * Runs model `model` and returns the utterance score; frame scores are
     * kept for `frame_scores` and `regions`.
     */
    score(model: number): number;
    span_end(): number;
    span_start(): number;
    /**
     * Frame-major magnitudes of the current utterance.
     */
    spectrogram(): Float32Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly session_bins: (a: number) => number;
    readonly session_frame_scores: (a: number) => [number, number];
    readonly session_frames: (a: number) => number;
    readonly session_iou: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly session_mix: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly session_model_names: (a: number) => [number, number];
    readonly session_new: () => [number, number, number];
    readonly session_regions: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly session_sample_rate: (a: number) => number;
    readonly session_samples: (a: number) => [number, number];
    readonly session_score: (a: number, b: number) => [number, number, number];
    readonly session_span_end: (a: number) => number;
    readonly session_span_start: (a: number) => number;
    readonly session_spectrogram: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
