/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_binarizedpage_free: (a: number, b: number) => void;
export const binarize_page: (a: number, b: number, c: number, d: number) => [number, number, number];
export const binarizedpage_ink: (a: number) => number;
export const binarizedpage_rgba: (a: number) => [number, number];
export const binarizedpage_threshold: (a: number) => number;
export const segment_synthetic: (a: number, b: number, c: bigint) => [number, number, number, number];
export const topic_distances: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
