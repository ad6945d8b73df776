/* tslint:disable */
/* eslint-disable */

/**
 * Warmup-then-cosine learning-rate curve.
 */
export function lr_curve(base_lr: number, warmup: number, total: number): string;

/**
 * Dense PPR diffusion of the toy graph, rows grouped by community.
 */
export function ppr_demo(n: number, communities: number, alpha: number, seed: bigint): string;

/**
 * Builds a toy graph and its semantic graph for one motif.
 */
export function semantic_demo(n: number, communities: number, motif: string, k: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly lr_curve: (a: number, b: number, c: number) => [number, number];
    readonly ppr_demo: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly semantic_demo: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
