export * from './types';
export * from './geometry';
export * from './reflow';
export * from './constraints';
export * from './canvas';
export * from './api';
export * from './timeline';
export * from './compare';
