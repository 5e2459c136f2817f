import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // The contract suite boots the real annotation service.
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
