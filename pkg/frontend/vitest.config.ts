import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'node',
    include: ['tests/**/*.test.ts'],
    // the golden test trains a checkpoint and drives a live server
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
