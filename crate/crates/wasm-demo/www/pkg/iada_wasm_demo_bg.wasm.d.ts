/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_new: (a: number, b: bigint) => number;
export const demo_points: (a: number) => [number, number];
export const demo_raster: (a: number, b: number) => [number, number, number, number];
export const demo_train: (a: number, b: number) => [number, number, number];
export const demo_train_augmented: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_verify: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
