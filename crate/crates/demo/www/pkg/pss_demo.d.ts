/* tslint:disable */
/* eslint-disable */

/**
 * Result of binarizing one page image.
 */
export class BinarizedPage {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly ink: number;
    /**
     * 224×224 RGBA pixels, ink drawn black.
     */
    readonly rgba: Uint8Array;
    readonly threshold: number;
}

/**
 * Grayscale, resize to 224×224 and OTSU-binarize canvas RGBA pixels.
 */
export function binarize_page(width: number, height: number, rgba: Uint8Array): BinarizedPage;

/**
 * Generates `streams` synthetic streams, trains the unigram SVM on 80% of
 * them and segments the rest. Returns the segmentation CSV followed by a
 * `# accuracy=… kappa=…` line.
 */
export function segment_synthetic(streams: number, pages: number, seed: bigint): string;

/**
 * `[hellinger, cosine]` between two nonnegative weight lists, each
 * normalized to sum 1 first.
 */
export function topic_distances(p: Float64Array, q: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_binarizedpage_free: (a: number, b: number) => void;
    readonly binarize_page: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly binarizedpage_ink: (a: number) => number;
    readonly binarizedpage_rgba: (a: number) => [number, number];
    readonly binarizedpage_threshold: (a: number) => number;
    readonly segment_synthetic: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly topic_distances: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
