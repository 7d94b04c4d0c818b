export { loadMapping, type BridgeMapping } from './mapping.js';
export { exportToSchemas, hubSplitFile } from './exporter.js';
export { importFromSchemas } from './importer.js';
export { readJsonl, writeJsonl, readTsv, writeTsv } from './jsonl.js';
export { TASKS, type Task, recordSchemas, manifestSchema, validateRecord } from './schemas.js';
