/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `n` ground-truth samples on the unit square.
     */
    constructor(n: number, seed: bigint);
    /**
     * Flattened `[x₁, x₂, y]` triples of the current training set.
     */
    points(): Float64Array;
    /**
     * Predicted class per cell, row-major, row 0 at the bottom (`x₂` small).
     */
    raster(resolution: number): Uint8Array;
    /**
     * Regular training from scratch; returns test accuracy.
     */
    train(epochs: number): number;
    /**
     * Training with verification rounds every `r_v` epochs, labeling
     * adversaries by the ground truth. Returns test accuracy; the training
     * set grows by the labeled adversaries.
     */
    train_augmented(epochs: number, r_v: number, eps: number): number;
    /**
     * Minimal L∞ adversary of the point under its predicted class, as JSON.
     */
    verify(x1: number, x2: number, eps: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_new: (a: number, b: bigint) => number;
    readonly demo_points: (a: number) => [number, number];
    readonly demo_raster: (a: number, b: number) => [number, number, number, number];
    readonly demo_train: (a: number, b: number) => [number, number, number];
    readonly demo_train_augmented: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_verify: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
