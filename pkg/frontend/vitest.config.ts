import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // integration tests spawn a real backend; give them room
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
