/* tslint:disable */
/* eslint-disable */

/**
 * Margin-loss speed curves with every non-target angle pinned at
 * `reference_angle`, rows `[theta, v_intra, v_inter]`. For `combined`, `m`
 * is the additive angular term and the other two margins are fixed at 1 and 0.2.
 */
export function margin_curves(variant: string, s: number, m: number, num_classes: number, reference_angle: number, points: number): Float64Array;

/**
 * Re-scale speed curves, rows `[theta, v_intra, v_inter]`.
 */
export function rescale_curves(family: string, s: number, k: number, a: number, b: number, points: number): Float64Array;

/**
 * Train on a small noisy dataset and return the trace, rows
 * `[step, loss, clean_intra_deg, noisy_intra_deg, inter_deg]`, followed by
 * one final row `[-1, delta_intra, inter_mean, inter_std, max_norm_drift]`.
 *
 * `loss` is `sface` (sigmoid, s=64, k=80, cutoffs `a`, `b`) or a margin
 * variant name using `s = 64` and margin `m`.
 */
export function train_demo(loss: string, a: number, b: number, m: number, flip_rate: number, steps: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly margin_curves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly rescale_curves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly train_demo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
