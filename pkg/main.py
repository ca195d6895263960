import sys

from src.app import CatoApp
from src.logging.logger_config import logger


def main() -> None:
    """
    CATO 命令行主入口函数

    负责初始化应用并执行子命令，按子命令结果设置退出码
    """
    try:
        app = CatoApp()
        sys.exit(app.run(sys.argv[1:]))

    except KeyboardInterrupt:
        logger.info("用户手动中断程序")
        print("\n程序被用户中断，正在退出...")
        sys.exit(0)

    except RuntimeError as e:
        # 环境检查失败
        logger.error(f"运行环境不满足要求: {e}")
        print(f"运行环境不满足要求: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
