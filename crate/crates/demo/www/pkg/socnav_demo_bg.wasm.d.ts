/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_modelField: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_new: (a: number) => [number, number, number];
export const demo_newScenario: (a: number, b: number) => [number, number, number, number];
export const demo_proxyField: (a: number, b: number) => [number, number, number, number];
export const demo_scenarioJson: (a: number) => [number, number];
export const demo_startTraining: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const demo_trainEpoch: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
