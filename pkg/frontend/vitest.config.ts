import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'node',
    include: ['tests/**/*.test.ts'],
    // the e2e suite owns a fixed service port; keep files sequential
    fileParallelism: false,
    testTimeout: 20_000,
  },
});
