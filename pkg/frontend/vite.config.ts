import { defineConfig } from "vite";

export default defineConfig({
  server: {
    proxy: {
      // forward API calls to the analytics service during development
      "^/(datasets|communities|flow-matrix|cbgs|model|whatif|strategies|features|config)": {
        target: "http://127.0.0.1:8040",
        changeOrigin: true,
      },
    },
  },
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
  },
});
